#include "spindyn/dtwa.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "spindyn/common.hpp"

namespace spindyn::dtwa {

ClassicalHamiltonian::ClassicalHamiltonian(CouplingMatrix couplings) : couplings_(std::move(couplings)) {
    const int L = couplings_.site_count();
    neighbors_.resize(L);
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            if (i == j) continue;
            const std::array<double, 3> jij{couplings_.axes[0](i, j), couplings_.axes[1](i, j), couplings_.axes[2](i, j)};
            if (jij[0] != 0.0 || jij[1] != 0.0 || jij[2] != 0.0) neighbors_[i].push_back({j, jij});
        }
}

double ClassicalHamiltonian::energy(const ClassicalConfig& c) const {
    double e = 0.0;
    for (int i = 0; i < site_count(); ++i)
        for (const auto& n : neighbors_[i]) {
            if (n.site < i) continue;
            for (int mu = 0; mu < 3; ++mu) e -= n.j[mu] * c.at(i, mu) * c.at(n.site, mu);
        }
    return e;
}

void ClassicalHamiltonian::gradient(const ClassicalConfig& c, std::vector<double>& out) const {
    out.assign(c.spins.size(), 0.0);
    for (int i = 0; i < site_count(); ++i) {
        double g[3] = {0.0, 0.0, 0.0};
        for (const auto& n : neighbors_[i])
            for (int mu = 0; mu < 3; ++mu) g[mu] -= n.j[mu] * c.spins[3 * n.site + mu];
        for (int mu = 0; mu < 3; ++mu) out[3 * i + mu] = g[mu];
    }
}

double ClassicalHamiltonian::max_rate() const {
    double rate = 0.0;
    for (const auto& list : neighbors_) {
        double g2 = 0.0;
        for (int mu = 0; mu < 3; ++mu) {
            double g = 0.0;
            for (const auto& n : list) g += std::abs(n.j[mu]);
            g2 += g * g;
        }
        // |s_j^mu| <= sqrt(3) for any configuration on the |s|^2 = 3 sphere.
        rate = std::max(rate, 2.0 * std::sqrt(3.0 * g2));
    }
    return rate;
}

ClassicalConfig sample_initial(int site_count, std::uint64_t seed, std::uint64_t trajectory) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trajectory), static_cast<std::uint32_t>(trajectory >> 32)};
    std::mt19937_64 rng(seq);
    ClassicalConfig c;
    c.spins.resize(3 * static_cast<std::size_t>(site_count));
    std::uint64_t bits = 0;
    int left = 0;
    auto coin = [&]() {
        if (left == 0) {
            bits = rng();
            left = 64;
        }
        const double v = (bits & 1u) ? 1.0 : -1.0;
        bits >>= 1;
        --left;
        return v;
    };
    for (int i = 0; i < site_count; ++i) {
        c.at(i, 0) = 1.0;
        c.at(i, 1) = coin();
        c.at(i, 2) = coin();
    }
    return c;
}

namespace {

void rhs(const ClassicalHamiltonian& h, const ClassicalConfig& c, std::vector<double>& grad, ClassicalConfig& out) {
    h.gradient(c, grad);
    out.spins.resize(c.spins.size());
    for (int i = 0; i < c.site_count(); ++i) {
        const double* s = &c.spins[3 * i];
        const double* g = &grad[3 * i];
        double* d = &out.spins[3 * i];
        d[0] = 2.0 * (s[1] * g[2] - s[2] * g[1]);
        d[1] = 2.0 * (s[2] * g[0] - s[0] * g[2]);
        d[2] = 2.0 * (s[0] * g[1] - s[1] * g[0]);
    }
}

struct Rk4 {
    ClassicalConfig k1, k2, k3, k4, tmp;
    std::vector<double> grad;

    void step(const ClassicalHamiltonian& h, ClassicalConfig& y, double dt) {
        const std::size_t n = y.spins.size();
        tmp.spins.resize(n);
        rhs(h, y, grad, k1);
        for (std::size_t a = 0; a < n; ++a) tmp.spins[a] = y.spins[a] + 0.5 * dt * k1.spins[a];
        rhs(h, tmp, grad, k2);
        for (std::size_t a = 0; a < n; ++a) tmp.spins[a] = y.spins[a] + 0.5 * dt * k2.spins[a];
        rhs(h, tmp, grad, k3);
        for (std::size_t a = 0; a < n; ++a) tmp.spins[a] = y.spins[a] + dt * k3.spins[a];
        rhs(h, tmp, grad, k4);
        for (std::size_t a = 0; a < n; ++a)
            y.spins[a] += dt / 6.0 * (k1.spins[a] + 2.0 * k2.spins[a] + 2.0 * k3.spins[a] + k4.spins[a]);
    }
};

struct Moments {
    double s = 0.0, s2 = 0.0;
    void add(double v) {
        s += v;
        s2 += v * v;
    }
    void merge(const Moments& o) {
        s += o.s;
        s2 += o.s2;
    }
    Estimate estimate(double n) const {
        const double mean = s / n;
        const double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)) : 0.0;
        return {mean, std::sqrt(var / n)};
    }
};

struct Accumulator {
    // Collective: X = sum_i s^x_i, Q = X^2 - sum_i (s^x_i)^2 per trajectory.
    std::vector<Moments> x, q;
    std::vector<double> xq;
    std::vector<std::vector<Moments>> site;                    // [time][site]
    std::vector<std::vector<std::array<Moments, 3>>> pair;     // [time][pair]{xx, same, opposite}
    double max_norm_drift = 0.0;
    double max_energy_drift = 0.0;
    std::vector<int> unstable;

    Accumulator(std::size_t n_times, int L, bool site_resolved, std::size_t n_pairs)
        : x(n_times), q(n_times), xq(n_times, 0.0) {
        if (site_resolved) site.assign(n_times, std::vector<Moments>(L));
        if (n_pairs) pair.assign(n_times, std::vector<std::array<Moments, 3>>(n_pairs));
    }

    void merge(const Accumulator& o) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k].merge(o.x[k]);
            q[k].merge(o.q[k]);
            xq[k] += o.xq[k];
            for (std::size_t i = 0; i < (site.empty() ? 0 : site[k].size()); ++i) site[k][i].merge(o.site[k][i]);
            for (std::size_t p = 0; p < (pair.empty() ? 0 : pair[k].size()); ++p)
                for (int c = 0; c < 3; ++c) pair[k][p][c].merge(o.pair[k][p][c]);
        }
        max_norm_drift = std::max(max_norm_drift, o.max_norm_drift);
        max_energy_drift = std::max(max_energy_drift, o.max_energy_drift);
        unstable.insert(unstable.end(), o.unstable.begin(), o.unstable.end());
    }
};

void record(Accumulator& acc, std::size_t k, const ClassicalConfig& c, const std::vector<PairRequest>& pairs) {
    double X = 0.0, diag = 0.0;
    for (int i = 0; i < c.site_count(); ++i) {
        const double sx = c.at(i, 0);
        X += sx;
        diag += sx * sx;
        if (!acc.site.empty()) acc.site[k][i].add(sx);
    }
    const double Q = X * X - diag;
    acc.x[k].add(X);
    acc.q[k].add(Q);
    acc.xq[k] += X * Q;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const int i = pairs[p].i, j = pairs[p].j;
        const double xi = c.at(i, 0), yi = c.at(i, 1), xj = c.at(j, 0), yj = c.at(j, 1);
        acc.pair[k][p][0].add(xi * xj);
        // Re[(xi + i yi)(xj + i yj)] / 4 and Re[(xi - i yi)(xj + i yj)] / 4.
        acc.pair[k][p][1].add(0.25 * (xi * xj - yi * yj));
        acc.pair[k][p][2].add(0.25 * (xi * xj + yi * yj));
    }
}

}  // namespace

ClassicalConfig eom_rhs(const ClassicalConfig& c, const ClassicalHamiltonian& h) {
    ClassicalConfig out;
    std::vector<double> grad;
    rhs(h, c, grad, out);
    return out;
}

double default_step(const ClassicalHamiltonian& h) {
    const double rate = h.max_rate();
    return rate > 0.0 ? std::min(0.005, 0.02 / rate) : 0.005;
}

DtwaResult run_ensemble(const ClassicalHamiltonian& h, const EnsembleSpec& ensemble,
                        std::span<const double> t_grid, const DtwaRequest& request) {
    if (ensemble.n_t < 1) throw ConfigError("n_t must be at least 1");
    if (t_grid.empty() || t_grid.front() != 0.0) throw ConfigError("time grid must start at 0");
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        if (!(t_grid[k] > t_grid[k - 1])) throw ConfigError("time grid must be increasing");
    const int L = h.site_count();
    for (const auto& p : request.pairs)
        if (p.i == p.j || p.i < 0 || p.j < 0 || p.i >= L || p.j >= L) throw ConfigError("invalid DTWA pair request");

    const double dt = ensemble.dt.value_or(default_step(h));
    if (!(dt > 0.0)) throw ConfigError("DTWA step must be positive");
    const std::size_t n_times = t_grid.size();

    // Substeps per grid interval so that the grid is hit exactly.
    std::vector<int> substeps(n_times, 0);
    for (std::size_t k = 1; k < n_times; ++k)
        substeps[k] = std::max(1, static_cast<int>(std::ceil((t_grid[k] - t_grid[k - 1]) / dt - 1e-9)));

    constexpr int chunk = 250;
    const int n_chunks = (ensemble.n_t + chunk - 1) / chunk;
    std::vector<Accumulator> partial;
    partial.reserve(n_chunks);
    for (int c = 0; c < n_chunks; ++c) partial.emplace_back(n_times, L, request.site_resolved, request.pairs.size());

    auto run_chunk = [&](int c) {
        Accumulator& acc = partial[c];
        Rk4 rk;
        const int first = c * chunk;
        const int last = std::min(ensemble.n_t, first + chunk);
        for (int traj = first; traj < last; ++traj) {
            ClassicalConfig y = sample_initial(L, ensemble.seed, static_cast<std::uint64_t>(traj));
            std::vector<double> norm0(L);
            for (int i = 0; i < L; ++i) norm0[i] = y.norm2(i);
            const double e0 = h.energy(y);
            double norm_drift = 0.0, energy_drift = 0.0;
            record(acc, 0, y, request.pairs);
            for (std::size_t k = 1; k < n_times; ++k) {
                const double step = (t_grid[k] - t_grid[k - 1]) / substeps[k];
                for (int s = 0; s < substeps[k]; ++s) rk.step(h, y, step);
                record(acc, k, y, request.pairs);
                for (int i = 0; i < L; ++i) norm_drift = std::max(norm_drift, std::abs(y.norm2(i) - norm0[i]));
                energy_drift = std::max(energy_drift, std::abs(h.energy(y) - e0));
            }
            acc.max_norm_drift = std::max(acc.max_norm_drift, norm_drift);
            acc.max_energy_drift = std::max(acc.max_energy_drift, energy_drift);
            if (norm_drift > request.drift_tolerance ||
                energy_drift > request.drift_tolerance * std::abs(e0) + 1e-9)
                acc.unstable.push_back(traj);
        }
    };

    const int workers = std::clamp(ensemble.workers, 1, n_chunks);
    if (workers == 1) {
        for (int c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (int c = w; c < n_chunks; c += workers) run_chunk(c);
            });
        for (auto& t : pool) t.join();
    }

    Accumulator total(n_times, L, request.site_resolved, request.pairs.size());
    for (const auto& p : partial) total.merge(p);

    const double n = ensemble.n_t;
    DtwaResult out;
    auto& s = out.series;
    s.t.assign(t_grid.begin(), t_grid.end());
    s.sx_stderr.emplace();
    s.dsx_stderr.emplace();
    for (std::size_t k = 0; k < n_times; ++k) {
        const Estimate ex = total.x[k].estimate(n);
        const Estimate eq = total.q[k].estimate(n);
        s.sx.push_back(ex.mean);
        s.sx_stderr->push_back(ex.std_error);
        // dSx = E[Q] + L - E[X]^2; delta-method error of Q - 2 E[X] X.
        s.dsx.push_back(eq.mean + L - ex.mean * ex.mean);
        double var = 0.0;
        if (n > 1) {
            const double var_x = ex.std_error * ex.std_error * n;
            const double var_q = eq.std_error * eq.std_error * n;
            const double cov = (total.xq[k] - n * ex.mean * eq.mean) / (n - 1.0);
            var = std::max(0.0, var_q + 4.0 * ex.mean * ex.mean * var_x - 4.0 * ex.mean * cov);
        }
        s.dsx_stderr->push_back(std::sqrt(var / n));
    }
    s.metadata["backend"] = "dtwa";
    s.metadata["couplings"] = fingerprint(h.couplings());
    s.metadata["n_t"] = std::to_string(ensemble.n_t);
    s.metadata["seed"] = std::to_string(ensemble.seed);
    {
        std::ostringstream dt_text;
        dt_text.precision(17);
        dt_text << dt;
        s.metadata["dt"] = dt_text.str();
    }

    if (request.site_resolved) {
        out.one_point.assign(n_times, std::vector<Estimate>(L));
        for (std::size_t k = 0; k < n_times; ++k)
            for (int i = 0; i < L; ++i) out.one_point[k][i] = total.site[k][i].estimate(n);
    }
    for (std::size_t p = 0; p < request.pairs.size(); ++p) {
        PairSeries ps{request.pairs[p].i, request.pairs[p].j, {}, {}, {}};
        for (std::size_t k = 0; k < n_times; ++k) {
            ps.xx.push_back(total.pair[k][p][0].estimate(n));
            ps.same.push_back(total.pair[k][p][1].estimate(n));
            ps.opposite.push_back(total.pair[k][p][2].estimate(n));
        }
        out.pairs.push_back(std::move(ps));
    }
    out.max_norm_drift = total.max_norm_drift;
    out.max_energy_drift = total.max_energy_drift;
    out.unstable_trajectories = std::move(total.unstable);
    return out;
}

}  // namespace spindyn::dtwa
