#include "spindyn/ising_oracle.hpp"

#include <cmath>

#include "spindyn/common.hpp"

namespace spindyn::oracle {

IsingCase::IsingCase(CouplingMatrix couplings) : couplings_(std::move(couplings)) {
    if (!couplings_.is_ising()) throw ConfigError("the Ising oracle requires J^x = J^y = 0");
}

double one_point_x(const IsingCase& c, int i, double t) {
    if (t < 0.0) throw ConfigError("oracle times must be nonnegative");
    const auto& J = c.jz();
    double value = 1.0;
    for (int k = 0; k < c.site_count(); ++k)
        if (k != i) value *= std::cos(2.0 * t * J(k, i));
    return value;
}

PairChannels two_point_channels(const IsingCase& c, int i, int j, double t) {
    if (i == j) throw ConfigError("two-point functions need distinct sites");
    if (t < 0.0) throw ConfigError("oracle times must be nonnegative");
    const auto& J = c.jz();
    double plus = 1.0;
    double minus = 1.0;
    for (int k = 0; k < c.site_count(); ++k) {
        if (k == i || k == j) continue;
        plus *= std::cos(2.0 * t * (J(k, i) + J(k, j)));
        minus *= std::cos(2.0 * t * (J(k, i) - J(k, j)));
    }
    return {0.25 * plus, 0.25 * minus};
}

double two_point_x(const IsingCase& c, int i, int j, double t) {
    const auto ch = two_point_channels(c, i, j, t);
    return 2.0 * (ch.same + ch.opposite);
}

ObservableSeries collective_series(const IsingCase& c, std::span<const double> t_grid) {
    const int L = c.site_count();
    ObservableSeries out;
    out.metadata["backend"] = "oracle";
    out.metadata["couplings"] = fingerprint(c.couplings());
    if (c.couplings().seed) out.metadata["seed"] = std::to_string(*c.couplings().seed);

    std::vector<double> one(L);
    Eigen::MatrixXd two = Eigen::MatrixXd::Zero(L, L);
    for (double t : t_grid) {
        for (int i = 0; i < L; ++i) one[i] = one_point_x(c, i, t);
        for (int i = 0; i < L; ++i)
            for (int j = i + 1; j < L; ++j) two(i, j) = two(j, i) = two_point_x(c, i, j, t);
        const Collective col = assemble(one, two);
        out.t.push_back(t);
        out.sx.push_back(col.sx);
        out.dsx.push_back(col.dsx);
    }
    return out;
}

DtwaIdentity dtwa_identity_check(const IsingCase& c, int i, int j, double t) {
    const PairChannels exact = two_point_channels(c, i, j, t);
    const double damp = std::pow(std::cos(2.0 * t * c.jz()(i, j)), 2);
    DtwaIdentity out;
    out.exact = 2.0 * (exact.same + exact.opposite);
    out.dtwa_channels = {exact.same * damp, exact.opposite * damp};
    out.dtwa_predicted = 2.0 * (out.dtwa_channels.same + out.dtwa_channels.opposite);
    return out;
}

DisorderEnsemble disorder_ensemble(const LatticeSpec& lattice, double alpha, std::uint64_t base_seed,
                                   int realizations, std::span<const double> t_grid) {
    if (realizations < 1) throw ConfigError("need at least one disorder realization");
    DisorderEnsemble out;
    for (int r = 0; r < realizations; ++r) {
        const IsingCase c(sample_disorder(lattice, alpha, base_seed + static_cast<std::uint64_t>(r)));
        out.realizations.push_back(collective_series(c, t_grid));
    }
    out.mean = ensemble_average(out.realizations);
    return out;
}

}  // namespace spindyn::oracle
