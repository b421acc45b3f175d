#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "spindyn/ed.hpp"
#include "spindyn/ising_oracle.hpp"
#include "test_support.hpp"

using namespace spindyn;
using testing::grid;

TEST_CASE("x-polarized product state") {
    auto s1 = ed::prepare_x_polarized(1);
    CHECK(std::abs(s1.amplitudes(0) - 1.0 / std::sqrt(2.0)) <= 1e-15);
    CHECK(std::abs(s1.amplitudes(1) - 1.0 / std::sqrt(2.0)) <= 1e-15);
    auto s2 = ed::prepare_x_polarized(2);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(s2.amplitudes(k) - 0.5) <= 1e-15);
    auto s10 = ed::prepare_x_polarized(10);
    CHECK(ed::collective_x(s10).sx == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(std::abs(ed::collective_x(s10).dsx()) <= 1e-12);
}

TEST_CASE("propagation with an empty Hamiltonian is the identity") {
    auto psi0 = ed::prepare_x_polarized(4);
    psi0.amplitudes = testing::random_vector(4, 3);
    auto t = grid(1.0, 0.25);
    for (const auto& s : ed::propagate(psi0, TermList(4), t)) CHECK((s.amplitudes - psi0.amplitudes).norm() <= 1e-14);
}

TEST_CASE("two-site closed form") {
    auto terms = heisenberg_terms(testing::ising(2, 0.0));
    auto t = grid(3.0, 0.1);
    auto snaps = ed::propagate(ed::prepare_x_polarized(2), terms, t);
    for (std::size_t k = 0; k < t.size(); ++k) {
        CHECK(std::abs(ed::expect_site(snaps[k], 0, PauliAxis::x) - std::cos(2.0 * t[k])) <= 1e-10);
        CHECK(std::abs(ed::expect_pair(snaps[k], 0, PauliAxis::x, 1, PauliAxis::x) - 1.0) <= 1e-10);
    }
}

TEST_CASE("L=8 alpha=3 Ising follows the oracle and conserves norm and energy") {
    auto c = testing::ising(8, 3.0);
    auto terms = heisenberg_terms(c);
    CompiledTerms h(terms);
    oracle::IsingCase ic(c);
    auto t = grid(3.0, 0.1);
    auto ref = oracle::collective_series(ic, t);
    const double e0 = ed::expectation(ed::prepare_x_polarized(8), h);
    double worst = 0.0, norm_err = 0.0, e_err = 0.0;
    std::size_t k = 0;
    ed::propagate_each(ed::prepare_x_polarized(8), terms, t, [&](double, const ed::StateVector& s) {
        worst = std::max(worst, std::abs(ed::collective_x(s).sx - ref.sx[k]));
        worst = std::max(worst, std::abs(ed::collective_x(s).dsx() - ref.dsx[k]));
        norm_err = std::max(norm_err, std::abs(s.norm() - 1.0));
        e_err = std::max(e_err, std::abs(ed::expectation(s, h) - e0));
        ++k;
    });
    CHECK(k == t.size());
    CHECK(worst <= 1e-8);
    CHECK(norm_err <= 1e-10);
    CHECK(e_err <= 1e-8);
}

TEST_CASE("reduced density and entropy") {
    auto prod = ed::prepare_x_polarized(6);
    std::vector<int> cut = {1, 4};
    auto rho = ed::reduced_density(prod, cut);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.matrix);
    CHECK(es.eigenvalues().head(3).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(ed::von_neumann_entropy(rho) == doctest::Approx(0.0));

    ed::StateVector bell{2, Eigen::VectorXcd::Zero(4)};
    bell.amplitudes(0) = bell.amplitudes(3) = 1.0 / std::sqrt(2.0);
    std::vector<int> one = {0};
    auto rb = ed::reduced_density(bell, one);
    CHECK((rb.matrix - 0.5 * Eigen::MatrixXcd::Identity(2, 2)).norm() <= 1e-15);
    CHECK(ed::von_neumann_entropy(rb) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    std::vector<double> mixed(8, 1.0 / 8.0);
    CHECK(ed::von_neumann_entropy(mixed) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));

    ed::StateVector r{8, testing::random_vector(8, 17)};
    std::vector<int> two = {2, 5};
    auto rr = ed::reduced_density(r, two);
    CHECK(std::abs(rr.matrix.trace() - 1.0) <= 1e-12);
    CHECK((rr.matrix - rr.matrix.adjoint()).norm() <= 1e-14);
    std::vector<int> rest = {0, 1, 3, 4, 6, 7};
    CHECK(std::abs(ed::von_neumann_entropy(rr) - ed::von_neumann_entropy(ed::reduced_density(r, rest))) <= 1e-10);

    std::vector<int> none;
    std::vector<int> all = {0, 1};
    CHECK_THROWS(ed::reduced_density(bell, none));
    CHECK_THROWS(ed::reduced_density(bell, all));
}

TEST_CASE("collective_x agrees with per-pair expectations") {
    ed::StateVector r{6, testing::random_vector(6, 23)};
    auto cx = ed::collective_x(r);
    double sx = 0.0, sx2 = 6.0;
    for (int i = 0; i < 6; ++i) {
        sx += ed::expect_site(r, i, PauliAxis::x);
        for (int j = 0; j < 6; ++j)
            if (i != j) sx2 += ed::expect_pair(r, i, PauliAxis::x, j, PauliAxis::x);
    }
    CHECK(std::abs(cx.sx - sx) <= 1e-12);
    CHECK(std::abs(cx.sx2 - sx2) <= 1e-12);
    CHECK(std::abs(ed::expectation(r, CompiledTerms(sx_pair_terms(6))) + 6.0 - sx2) <= 1e-12);
}

TEST_CASE("snapshot dump layout") {
    std::ostringstream os;
    ed::write_snapshot(os, 0.5, ed::prepare_x_polarized(3));
    CHECK(os.str().size() == 4 + 8 + 8 * 16);
}
