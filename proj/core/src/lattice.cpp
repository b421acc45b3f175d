#include "spindyn/lattice.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "spindyn/common.hpp"

namespace spindyn {

LatticeSpec::LatticeSpec(Geometry geometry, int lx, int ly) : geometry_(geometry), lx_(lx), ly_(ly) {
    if (lx <= 0 || ly <= 0) throw ConfigError("lattice extents must be positive");
    if (geometry == Geometry::chain1d && ly != 1) throw ConfigError("a 1D chain has a single extent");
}

std::array<int, 2> LatticeSpec::coords(int site) const {
    if (site < 0 || site >= site_count()) throw std::out_of_range("site index out of range");
    return {site % lx_, site / lx_};
}

double LatticeSpec::distance(int i, int j) const {
    const auto a = coords(i);
    const auto b = coords(j);
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

bool LatticeSpec::adjacent(int i, int j) const {
    const auto a = coords(i);
    const auto b = coords(j);
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) == 1;
}

LatticeSpec build_lattice(Geometry geometry, std::span<const int> extents) {
    if (geometry == Geometry::chain1d) {
        if (extents.size() != 1) throw ConfigError("chain1d takes exactly one extent");
        return LatticeSpec(geometry, extents[0], 1);
    }
    if (extents.size() != 2) throw ConfigError("square2d takes two extents (Lx, Ly)");
    return LatticeSpec(geometry, extents[0], extents[1]);
}

std::string to_string(CouplingMode mode) {
    switch (mode) {
        case CouplingMode::powerlaw: return "powerlaw";
        case CouplingMode::nearest_neighbor: return "nearest_neighbor";
        case CouplingMode::disordered_powerlaw: return "disordered_powerlaw";
    }
    return "?";
}

CouplingMode parse_coupling_mode(const std::string& text) {
    if (text == "powerlaw") return CouplingMode::powerlaw;
    if (text == "nearest_neighbor" || text == "nn") return CouplingMode::nearest_neighbor;
    if (text == "disordered_powerlaw") return CouplingMode::disordered_powerlaw;
    throw ConfigError("unknown coupling mode '" + text + "'");
}

std::string to_string(Geometry geometry) {
    return geometry == Geometry::chain1d ? "chain1d" : "square2d";
}

Geometry parse_geometry(const std::string& text) {
    if (text == "chain1d") return Geometry::chain1d;
    if (text == "square2d") return Geometry::square2d;
    throw ConfigError("unknown geometry '" + text + "'");
}

bool CouplingMatrix::is_ising() const {
    return axes[0].cwiseAbs().maxCoeff() == 0.0 && axes[1].cwiseAbs().maxCoeff() == 0.0;
}

CouplingMatrix build_couplings(const LatticeSpec& lattice, double alpha,
                               const std::array<double, 3>& J, CouplingMode mode) {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
    if (mode == CouplingMode::disordered_powerlaw)
        throw ConfigError("disordered couplings are drawn with sample_disorder");

    const int L = lattice.site_count();
    CouplingMatrix out;
    out.alpha = alpha;
    out.mode = mode;
    for (auto& m : out.axes) m = Eigen::MatrixXd::Zero(L, L);

    for (int i = 0; i < L; ++i) {
        for (int j = i + 1; j < L; ++j) {
            double decay = 0.0;
            if (mode == CouplingMode::powerlaw)
                decay = 1.0 / std::pow(lattice.distance(i, j), alpha);
            else if (lattice.adjacent(i, j))
                decay = 1.0;
            if (decay == 0.0) continue;
            for (int b = 0; b < 3; ++b) {
                out.axes[b](i, j) = J[b] * decay;
                out.axes[b](j, i) = J[b] * decay;
            }
        }
    }
    return out;
}

CouplingMatrix compose_disorder(const LatticeSpec& lattice, double alpha,
                                const Eigen::MatrixXd& amplitudes,
                                std::optional<std::uint64_t> seed) {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
    const int L = lattice.site_count();
    if (amplitudes.rows() != L || amplitudes.cols() != L)
        throw ConfigError("amplitude matrix does not match the lattice");

    CouplingMatrix out;
    out.alpha = alpha;
    out.mode = CouplingMode::disordered_powerlaw;
    out.seed = seed;
    for (auto& m : out.axes) m = Eigen::MatrixXd::Zero(L, L);
    for (int i = 0; i < L; ++i) {
        for (int j = i + 1; j < L; ++j) {
            const double v = amplitudes(i, j) / std::pow(lattice.distance(i, j), alpha);
            out.axes[2](i, j) = v;
            out.axes[2](j, i) = v;
        }
    }
    return out;
}

CouplingMatrix sample_disorder(const LatticeSpec& lattice, double alpha, std::uint64_t seed) {
    const int L = lattice.site_count();
    // One generator per realization: realization k depends on its own seed only.
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x5eedu};
    std::mt19937_64 rng(seq);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(L, L);
    for (int i = 0; i < L; ++i) {
        for (int j = i + 1; j < L; ++j) {
            // 53-bit uniform on [0, 1], mapped to [-1, 1].
            const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            u(i, j) = u(j, i) = 2.0 * unit - 1.0;
        }
    }
    return compose_disorder(lattice, alpha, u, seed);
}

void write_couplings(std::ostream& os, const CouplingMatrix& c) {
    const int L = c.site_count();
    std::ostringstream header;
    header << L << ' ' << std::setprecision(17) << c.alpha << ' ' << to_string(c.mode) << ' ';
    if (c.seed)
        header << *c.seed;
    else
        header << '-';
    os << header.str() << '\n';
    os << std::setprecision(17);
    for (const auto& m : c.axes) {
        for (int i = 0; i < L; ++i) {
            for (int j = 0; j < L; ++j) os << (j ? " " : "") << m(i, j);
            os << '\n';
        }
    }
}

CouplingMatrix read_couplings(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("empty coupling file");
    std::istringstream header(line);
    int L = 0;
    std::string mode_text, seed_text;
    CouplingMatrix c;
    if (!(header >> L >> c.alpha >> mode_text >> seed_text) || L <= 0)
        throw ConfigError("malformed coupling header: '" + line + "'");
    c.mode = parse_coupling_mode(mode_text);
    if (seed_text != "-") c.seed = std::stoull(seed_text);
    for (auto& m : c.axes) {
        m.resize(L, L);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j)
                if (!(is >> m(i, j))) throw ConfigError("truncated coupling matrix");
        if ((m - m.transpose()).cwiseAbs().maxCoeff() != 0.0 || m.diagonal().cwiseAbs().maxCoeff() != 0.0)
            throw ConfigError("coupling matrix must be symmetric with zero diagonal");
    }
    return c;
}

std::string fingerprint(const CouplingMatrix& c) {
    std::ostringstream text;
    write_couplings(text, c);
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(text.str());
    return hex.str();
}

}  // namespace spindyn
