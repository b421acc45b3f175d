#include <benchmark/benchmark.h>

#include <span>

#include "spindyn/dtwa.hpp"
#include "spindyn/ed.hpp"
#include "spindyn/hamiltonian.hpp"
#include "spindyn/ising_oracle.hpp"
#include "spindyn/mlmctdh/tree_operator.hpp"
#include "spindyn/mlmctdh/tree_state.hpp"

using namespace spindyn;

namespace {

CouplingMatrix couplings(int L, double alpha, bool xyz) {
    const auto lat = build_lattice(Geometry::chain1d, std::vector<int>{L});
    return build_couplings(lat, alpha, xyz ? std::array<double, 3>{0.5, 1.0, 0.25} : std::array<double, 3>{0, 0, 1},
                           CouplingMode::powerlaw);
}

void BM_ApplyTerms(benchmark::State& st) {
    const int L = static_cast<int>(st.range(0));
    const CompiledTerms h(heisenberg_terms(couplings(L, 3.0, true)));
    Eigen::VectorXcd psi = ed::prepare_x_polarized(L).amplitudes, out(psi.size());
    const std::span<const cplx> in(psi.data(), static_cast<std::size_t>(psi.size()));
    const std::span<cplx> dst(out.data(), static_cast<std::size_t>(out.size()));
    for (auto _ : st) {
        h.apply(in, dst);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * psi.size());
}
BENCHMARK(BM_ApplyTerms)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

// One evaluation of the tree equations of motion on a random state.
void tree_rhs(benchmark::State& st, int L, double alpha, bool xyz, const char* spec) {
    const auto top = mlmctdh::parse_tree(spec);
    const mlmctdh::TreeOperator op(top, heisenberg_terms(couplings(L, alpha, xyz)));
    const auto s = mlmctdh::random_state(top, 1);
    std::vector<mlmctdh::NodeTensor> d;
    for (auto _ : st) {
        op.time_derivative(s, d, 1e-8);
        benchmark::DoNotOptimize(d.data());
    }
}
BENCHMARK_CAPTURE(tree_rhs, ising_L32_a0, 32, 0.0, false, "32->[2]16->[4]4->[12]1")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(tree_rhs, ising_L32_a3, 32, 3.0, false, "32->[2]16->[4]4->[12]1")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(tree_rhs, xyz_L16_a3, 16, 3.0, true, "16->[2]4->[12]1")->Unit(benchmark::kMillisecond);

void BM_TreeExpectation(benchmark::State& st) {
    const auto top = mlmctdh::parse_tree("32->[2]16->[4]4->[12]1");
    const auto s = mlmctdh::random_state(top, 2);
    const mlmctdh::TreeOperator op(top, sx_pair_terms(32));
    for (auto _ : st) benchmark::DoNotOptimize(op.expectation(s));
}
BENCHMARK(BM_TreeExpectation)->Unit(benchmark::kMillisecond);

void BM_DtwaEnsemble(benchmark::State& st) {
    const int L = static_cast<int>(st.range(0));
    const dtwa::ClassicalHamiltonian h(couplings(L, 3.0, true));
    dtwa::EnsembleSpec spec;
    spec.n_t = 64;
    const std::vector<double> t = {0.0, 0.5, 1.0};
    for (auto _ : st) benchmark::DoNotOptimize(dtwa::run_ensemble(h, spec, t).series.sx.back());
    st.SetItemsProcessed(st.iterations() * spec.n_t);
}
BENCHMARK(BM_DtwaEnsemble)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_OracleSeries(benchmark::State& st) {
    const oracle::IsingCase c(couplings(static_cast<int>(st.range(0)), 3.0, false));
    std::vector<double> t;
    for (int k = 0; k <= 150; ++k) t.push_back(0.02 * k);
    for (auto _ : st) benchmark::DoNotOptimize(oracle::collective_series(c, t).dsx.back());
}
BENCHMARK(BM_OracleSeries)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
