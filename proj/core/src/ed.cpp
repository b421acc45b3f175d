#include "spindyn/ed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <ostream>
#include <sstream>

namespace spindyn::ed {

StateVector prepare_x_polarized(int site_count) {
    if (site_count < 1) throw ConfigError("need at least one site");
    if (site_count > 62) throw ConfigError("dense state vectors limited to 62 sites");
    if (site_count > default_max_sites)
        std::cerr << "warning: dense state for L=" << site_count << " holds 2^" << site_count
                  << " amplitudes\n";
    StateVector out;
    out.site_count = site_count;
    const auto dim = Eigen::Index{1} << site_count;
    out.amplitudes = Eigen::VectorXcd::Constant(dim, std::pow(2.0, -0.5 * site_count));
    return out;
}

namespace {

struct LanczosBasis {
    Eigen::MatrixXcd vectors;  // dim x k
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;      // beta(j) couples j and j+1; beta(k-1) is the residual norm
    bool invariant = false;
};

LanczosBasis lanczos(const CompiledTerms& h, const Eigen::VectorXcd& psi, int max_dim) {
    const Eigen::Index n = psi.size();
    const int k_max = static_cast<int>(std::min<Eigen::Index>(max_dim, n));
    LanczosBasis b;
    b.vectors.resize(n, k_max);
    b.alpha.resize(k_max);
    b.beta.resize(k_max);
    b.vectors.col(0) = psi / psi.norm();

    Eigen::VectorXcd w(n);
    int k = 0;
    for (; k < k_max; ++k) {
        w = h.apply(Eigen::VectorXcd(b.vectors.col(k)));
        b.alpha(k) = b.vectors.col(k).dot(w).real();
        // Full reorthogonalization, applied twice for stability.
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXcd overlaps = b.vectors.leftCols(k + 1).adjoint() * w;
            w.noalias() -= b.vectors.leftCols(k + 1) * overlaps;
        }
        b.beta(k) = w.norm();
        if (b.beta(k) < 1e-13 * std::max(1.0, std::abs(b.alpha(k)))) {
            b.invariant = true;
            ++k;
            break;
        }
        if (k + 1 < k_max) b.vectors.col(k + 1) = w / b.beta(k);
    }
    b.vectors.conservativeResize(Eigen::NoChange, k);
    b.alpha.conservativeResize(k);
    b.beta.conservativeResize(k);
    return b;
}

}  // namespace

Eigen::VectorXcd krylov_evolve(const CompiledTerms& h, const Eigen::VectorXcd& psi, double dt,
                               double t_start, const KrylovOptions& options) {
    Eigen::VectorXcd current = psi;
    double done = 0.0;
    double trial = dt;
    int substeps = 0;
    while (done < dt) {
        if (++substeps > options.max_substeps) {
            std::ostringstream msg;
            msg << "Krylov propagation did not converge on [" << t_start + done << ", " << t_start + dt
                << "]";
            throw NumericalError(msg.str());
        }
        const double norm = current.norm();
        if (norm == 0.0) return current;
        const LanczosBasis b = lanczos(h, current, options.max_dimension);
        const int k = static_cast<int>(b.alpha.size());

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        for (int j = 0; j < k; ++j) {
            T(j, j) = b.alpha(j);
            if (j + 1 < k) T(j, j + 1) = T(j + 1, j) = b.beta(j);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(T);
        const Eigen::VectorXd& w = eig.eigenvalues();
        const Eigen::VectorXd first_row = eig.eigenvectors().row(0).transpose();

        auto small_propagator = [&](double tau) {
            Eigen::VectorXcd phase(k);
            for (int j = 0; j < k; ++j) phase(j) = std::exp(cplx(0.0, -w(j) * tau)) * first_row(j);
            return Eigen::VectorXcd(eig.eigenvectors().cast<cplx>() * phase);
        };

        double tau = std::min(trial, dt - done);
        Eigen::VectorXcd coeffs = small_propagator(tau);
        if (!b.invariant) {
            // A posteriori estimate: residual norm times last Krylov coefficient.
            auto error = [&](const Eigen::VectorXcd& c) { return norm * b.beta(k - 1) * std::abs(c(k - 1)); };
            int shrink = 0;
            while (error(coeffs) > options.tolerance) {
                tau *= 0.5;
                if (++shrink > 60 || tau < 1e-15 * std::max(1.0, dt)) {
                    std::ostringstream msg;
                    msg << "Krylov step underflow on [" << t_start + done << ", " << t_start + dt << "]";
                    throw NumericalError(msg.str());
                }
                coeffs = small_propagator(tau);
            }
            // Grow the next trial step when this one was comfortably accurate.
            trial = error(coeffs) < 0.1 * options.tolerance ? tau * 1.5 : tau;
        }
        current = norm * (b.vectors * coeffs);
        done += tau;
        if (dt - done < 1e-14 * std::max(1.0, dt)) break;
    }
    return current;
}

void propagate_each(const StateVector& initial, const TermList& terms, std::span<const double> t_grid,
                    const std::function<void(double, const StateVector&)>& observer,
                    const KrylovOptions& options) {
    if (t_grid.empty()) return;
    if (t_grid.front() != 0.0) throw ConfigError("time grid must start at 0");
    if (terms.site_count() != initial.site_count) throw ConfigError("term list and state disagree on L");
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        if (!(t_grid[k] > t_grid[k - 1])) throw ConfigError("time grid must be increasing");

    const CompiledTerms h(terms);
    StateVector state = initial;
    observer(t_grid[0], state);
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        if (!terms.empty())
            state.amplitudes = krylov_evolve(h, state.amplitudes, t_grid[k] - t_grid[k - 1], t_grid[k - 1], options);
        observer(t_grid[k], state);
    }
}

std::vector<StateVector> propagate(const StateVector& initial, const TermList& terms,
                                   std::span<const double> t_grid, const KrylovOptions& options) {
    std::vector<StateVector> out;
    out.reserve(t_grid.size());
    propagate_each(initial, terms, t_grid, [&](double, const StateVector& s) { out.push_back(s); }, options);
    return out;
}

ReducedDensity reduced_density(const StateVector& state, std::span<const int> subsystem) {
    const int L = state.site_count;
    if (subsystem.empty() || static_cast<int>(subsystem.size()) >= L)
        throw ConfigError("subsystem must be a nonempty proper subset of the sites");
    std::uint64_t used = 0;
    for (int s : subsystem) {
        if (s < 0 || s >= L) throw ConfigError("subsystem site out of range");
        if (used & (std::uint64_t{1} << s)) throw ConfigError("subsystem sites must be distinct");
        used |= std::uint64_t{1} << s;
    }
    std::vector<int> env;
    for (int s = 0; s < L; ++s)
        if (!(used & (std::uint64_t{1} << s))) env.push_back(s);

    const int ka = static_cast<int>(subsystem.size());
    const Eigen::Index da = Eigen::Index{1} << ka;
    const Eigen::Index de = Eigen::Index{1} << env.size();
    Eigen::MatrixXcd psi(da, de);
    const auto dim = static_cast<std::uint64_t>(state.amplitudes.size());
    for (std::uint64_t s = 0; s < dim; ++s) {
        Eigen::Index a = 0, e = 0;
        for (int k = 0; k < ka; ++k) a |= static_cast<Eigen::Index>((s >> subsystem[k]) & 1u) << k;
        for (std::size_t k = 0; k < env.size(); ++k) e |= static_cast<Eigen::Index>((s >> env[k]) & 1u) << k;
        psi(a, e) = state.amplitudes(static_cast<Eigen::Index>(s));
    }
    ReducedDensity out;
    out.subsystem.assign(subsystem.begin(), subsystem.end());
    out.matrix = psi * psi.adjoint();
    return out;
}

double von_neumann_entropy(std::span<const double> eigenvalues) {
    double s = 0.0;
    for (double lambda : eigenvalues)
        if (lambda > 1e-14) s -= lambda * std::log(lambda);
    return s;
}

double von_neumann_entropy(const ReducedDensity& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(rho.matrix, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& w = eig.eigenvalues();
    return von_neumann_entropy(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
}

double expectation(const StateVector& state, const CompiledTerms& op) {
    return state.amplitudes.dot(op.apply(state.amplitudes)).real();
}

double expect_site(const StateVector& state, int site, PauliAxis axis) {
    TermList t(state.site_count);
    t.add(1.0, {{site, axis}});
    return expectation(state, CompiledTerms(t));
}

double expect_pair(const StateVector& state, int i, PauliAxis a, int j, PauliAxis b) {
    TermList t(state.site_count);
    t.add(1.0, {{i, a}, {j, b}});
    return expectation(state, CompiledTerms(t));
}

CollectiveX collective_x(const StateVector& state) {
    const auto dim = static_cast<std::uint64_t>(state.amplitudes.size());
    Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(state.amplitudes.size());
    for (std::uint64_t s = 0; s < dim; ++s) {
        cplx acc = 0.0;
        for (int i = 0; i < state.site_count; ++i)
            acc += state.amplitudes(static_cast<Eigen::Index>(s ^ (std::uint64_t{1} << i)));
        phi(static_cast<Eigen::Index>(s)) = acc;
    }
    return CollectiveX{state.amplitudes.dot(phi).real(), phi.squaredNorm()};
}

void write_snapshot(std::ostream& os, double t, const StateVector& state) {
    const std::int32_t L = state.site_count;
    os.write(reinterpret_cast<const char*>(&L), sizeof L);
    os.write(reinterpret_cast<const char*>(&t), sizeof t);
    os.write(reinterpret_cast<const char*>(state.amplitudes.data()),
             static_cast<std::streamsize>(state.amplitudes.size() * sizeof(cplx)));
}

}  // namespace spindyn::ed
