#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "spindyn/lattice.hpp"
#include "spindyn/observables.hpp"

namespace spindyn::dtwa {

/// Classical spin vectors (s^x, s^y, s^z) in Pauli normalization, stored
/// site-major: spins[3*i + mu].
struct ClassicalConfig {
    std::vector<double> spins;

    int site_count() const { return static_cast<int>(spins.size() / 3); }
    double& at(int i, int mu) { return spins[3 * i + mu]; }
    double at(int i, int mu) const { return spins[3 * i + mu]; }
    double norm2(int i) const { return at(i, 0) * at(i, 0) + at(i, 1) * at(i, 1) + at(i, 2) * at(i, 2); }
};

struct EnsembleSpec {
    int n_t = 10000;
    std::uint64_t seed = 1;
    /// Fixed RK4 step; default_step() when unset.
    std::optional<double> dt;
    /// Worker threads; the merge order is fixed, so results do not depend on it.
    int workers = 1;
};

/// H_C = -sum_{i<j} sum_b J^b_ij s^b_i s^b_j with sparse neighbour lists.
class ClassicalHamiltonian {
public:
    explicit ClassicalHamiltonian(CouplingMatrix couplings);

    const CouplingMatrix& couplings() const { return couplings_; }
    int site_count() const { return couplings_.site_count(); }

    double energy(const ClassicalConfig& c) const;
    /// dH_C/ds_i for every site, same layout as ClassicalConfig::spins.
    void gradient(const ClassicalConfig& c, std::vector<double>& out) const;
    /// Upper bound on the precession rate 2|dH_C/ds_i| over configurations with |s^mu| <= sqrt(3).
    double max_rate() const;

private:
    struct Neighbor {
        int site;
        std::array<double, 3> j;
    };
    CouplingMatrix couplings_;
    std::vector<std::vector<Neighbor>> neighbors_;
};

/// s^x = 1 and independent uniform s^y, s^z in {+1, -1}; deterministic in (seed, trajectory).
ClassicalConfig sample_initial(int site_count, std::uint64_t seed, std::uint64_t trajectory);

/// ds_i/dt = 2 s_i x dH_C/ds_i. In the Ising case this gives
/// ds^x = -2 s^y B, ds^y = +2 s^x B, ds^z = 0 with B_i = sum_j J^z_ij s^z_j,
/// i.e. s^+-(t) = s^+-(0) exp(+-2it B).
ClassicalConfig eom_rhs(const ClassicalConfig& c, const ClassicalHamiltonian& h);

/// min(0.005, 0.02 / max_rate): keeps |s|^2 and H_C drift below 1e-6 over tJ = 3.
double default_step(const ClassicalHamiltonian& h);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

struct PairRequest {
    int i = 0;
    int j = 1;
};

/// Sampled pair functions: xx = s^x_i s^x_j; same = Re(s^+_i s^+_j); opposite = Re(s^-_i s^+_j),
/// with s^+- = (s^x +- i s^y) / 2.
struct PairSeries {
    int i = 0;
    int j = 1;
    std::vector<Estimate> xx, same, opposite;
};

struct DtwaRequest {
    bool site_resolved = false;
    std::vector<PairRequest> pairs;
    double drift_tolerance = 1e-6;
};

struct DtwaResult {
    /// Sx, dSx with stderr columns; metadata n_t, dt, seed.
    ObservableSeries series;
    /// one_point[time][site] = <sigma^x_i> estimate (filled when site_resolved).
    std::vector<std::vector<Estimate>> one_point;
    std::vector<PairSeries> pairs;
    double max_norm_drift = 0.0;
    double max_energy_drift = 0.0;
    /// Trajectories whose drift exceeded the tolerance.
    std::vector<int> unstable_trajectories;
};

DtwaResult run_ensemble(const ClassicalHamiltonian& h, const EnsembleSpec& ensemble,
                        std::span<const double> t_grid, const DtwaRequest& request = {});

}  // namespace spindyn::dtwa
