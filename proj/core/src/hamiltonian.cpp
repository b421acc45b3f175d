#include "spindyn/hamiltonian.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <ostream>
#include <string>

namespace spindyn {

char axis_name(PauliAxis axis) {
    return "xyz"[static_cast<int>(axis)];
}

Eigen::Matrix2cd pauli_matrix(PauliAxis axis) {
    Eigen::Matrix2cd m;
    switch (axis) {
        case PauliAxis::x: m << 0, 1, 1, 0; break;
        case PauliAxis::y: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
        case PauliAxis::z: m << 1, 0, 0, -1; break;
    }
    return m;
}

void TermList::add(double coefficient, std::vector<PauliFactor> factors) {
    if (factors.empty() || factors.size() > 2) throw ConfigError("terms carry one or two Pauli factors");
    for (const auto& f : factors)
        if (f.site < 0 || f.site >= site_count_) throw ConfigError("term site out of range");
    if (factors.size() == 2 && factors[0].site == factors[1].site)
        throw ConfigError("term factors must sit on distinct sites");
    if (coefficient == 0.0) return;
    terms_.push_back(Term{coefficient, std::move(factors)});
}

std::ostream& operator<<(std::ostream& os, const TermList& terms) {
    os << "TermList(L=" << terms.site_count() << ", " << terms.size() << " terms)\n";
    for (const auto& t : terms.terms()) {
        os << "  " << t.coefficient;
        for (const auto& f : t.factors) os << " s" << axis_name(f.axis) << '_' << f.site;
        os << '\n';
    }
    return os;
}

TermList heisenberg_terms(const CouplingMatrix& couplings) {
    const int L = couplings.site_count();
    TermList out(L);
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j)
            for (int b = 0; b < 3; ++b) {
                const auto axis = static_cast<PauliAxis>(b);
                out.add(-couplings.axes[b](i, j), {{i, axis}, {j, axis}});
            }
    return out;
}

TermList sx_pair_terms(int site_count) {
    TermList out(site_count);
    for (int i = 0; i < site_count; ++i)
        for (int j = i + 1; j < site_count; ++j)
            out.add(2.0, {{i, PauliAxis::x}, {j, PauliAxis::x}});
    return out;
}

CompiledTerms::CompiledTerms(const TermList& terms) : site_count_(terms.site_count()) {
    if (site_count_ > 62) throw ConfigError("dense state vectors limited to 62 sites");
    diagonal_.assign(dimension(), 0.0);

    std::map<std::uint64_t, std::vector<Piece>> by_mask;
    for (const auto& t : terms.terms()) {
        std::uint64_t flip = 0;
        std::uint64_t sign = 0;
        int n_y = 0;
        for (const auto& f : t.factors) {
            const std::uint64_t bit = std::uint64_t{1} << f.site;
            if (f.axis != PauliAxis::z) flip |= bit;
            if (f.axis != PauliAxis::x) sign |= bit;
            if (f.axis == PauliAxis::y) ++n_y;
        }
        // sigma^y|b> = i (-1)^b |1-b>, sigma^z|b> = (-1)^b |b>, sigma^x|b> = |1-b>.
        static const cplx i_pow[4] = {1.0, cplx(0, 1), -1.0, cplx(0, -1)};
        by_mask[flip].push_back(Piece{t.coefficient * i_pow[n_y % 4], sign});
    }

    for (auto& [mask, pieces] : by_mask) {
        if (mask == 0) {
            for (std::size_t s = 0; s < diagonal_.size(); ++s)
                for (const auto& p : pieces)
                    diagonal_[s] += (std::popcount(s & p.sign_mask) & 1 ? -1.0 : 1.0) * p.coefficient.real();
        } else {
            groups_.push_back(FlipGroup{mask, std::move(pieces)});
        }
    }
}

void CompiledTerms::apply(std::span<const cplx> in, std::span<cplx> out) const {
    const std::size_t dim = dimension();
    if (in.size() != dim || out.size() != dim)
        throw ConfigError("state length " + std::to_string(in.size()) + " does not match 2^" +
                          std::to_string(site_count_));
    for (std::size_t s = 0; s < dim; ++s) out[s] = diagonal_[s] * in[s];
    for (const auto& g : groups_) {
        if (g.pieces.size() == 1) {
            const auto& p = g.pieces.front();
            for (std::size_t s = 0; s < dim; ++s) {
                const double sign = std::popcount(s & p.sign_mask) & 1 ? -1.0 : 1.0;
                out[s ^ g.flip_mask] += sign * p.coefficient * in[s];
            }
            continue;
        }
        for (std::size_t s = 0; s < dim; ++s) {
            cplx factor = 0.0;
            for (const auto& p : g.pieces)
                factor += (std::popcount(s & p.sign_mask) & 1 ? -1.0 : 1.0) * p.coefficient;
            out[s ^ g.flip_mask] += factor * in[s];
        }
    }
}

Eigen::VectorXcd CompiledTerms::apply(const Eigen::VectorXcd& in) const {
    Eigen::VectorXcd out(in.size());
    apply(std::span<const cplx>(in.data(), static_cast<std::size_t>(in.size())),
          std::span<cplx>(out.data(), static_cast<std::size_t>(out.size())));
    return out;
}

Eigen::VectorXcd apply_terms(const TermList& terms, const Eigen::VectorXcd& state) {
    return CompiledTerms(terms).apply(state);
}

}  // namespace spindyn
