#pragma once

#include <span>
#include <vector>

#include "spindyn/lattice.hpp"
#include "spindyn/observables.hpp"

namespace spindyn::oracle {

/// Ising couplings (J^x = J^y = 0) quenched from the x-polarized product state.
class IsingCase {
public:
    /// Throws ConfigError when J^x or J^y has a nonzero entry.
    explicit IsingCase(CouplingMatrix couplings);

    const CouplingMatrix& couplings() const { return couplings_; }
    const Eigen::MatrixXd& jz() const { return couplings_.z(); }
    int site_count() const { return couplings_.site_count(); }

private:
    CouplingMatrix couplings_;
};

/// <sigma^x_i>(t) = prod_{k != i} cos(2 t J_ki).
double one_point_x(const IsingCase& c, int i, double t);

/// Exact sigma^+/- pair channels, each real for the x-polarized start:
/// same = <s+_i s+_j> = <s-_i s-_j> = 1/4 prod_{k != i,j} cos(2t(J_ki + J_kj)),
/// opposite = <s-_i s+_j> = <s+_i s-_j> = 1/4 prod_{k != i,j} cos(2t(J_ki - J_kj)).
struct PairChannels {
    double same = 0.0;
    double opposite = 0.0;
};

PairChannels two_point_channels(const IsingCase& c, int i, int j, double t);

/// <sigma^x_i sigma^x_j>(t) = 2 (same + opposite). Throws for i == j.
double two_point_x(const IsingCase& c, int i, int j, double t);

ObservableSeries collective_series(const IsingCase& c, std::span<const double> t_grid);

struct DtwaIdentity {
    double exact = 0.0;
    double dtwa_predicted = 0.0;
    /// Channel-resolved infinite-sample DTWA values: exact channel * cos^2(2 t J_ij).
    PairChannels dtwa_channels;
};

DtwaIdentity dtwa_identity_check(const IsingCase& c, int i, int j, double t);

/// Per-realization oracle series and their ensemble mean (per time point).
struct DisorderEnsemble {
    std::vector<ObservableSeries> realizations;
    ObservableSeries mean;
};

DisorderEnsemble disorder_ensemble(const LatticeSpec& lattice, double alpha, std::uint64_t base_seed,
                                   int realizations, std::span<const double> t_grid);

}  // namespace spindyn::oracle
