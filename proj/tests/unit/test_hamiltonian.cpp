#include <complex>

#include "doctest.h"
#include "spindyn/common.hpp"
#include "spindyn/hamiltonian.hpp"
#include "test_support.hpp"

using namespace spindyn;
using testing::random_vector;

TEST_CASE("heisenberg_terms examples") {
    auto two = heisenberg_terms(testing::ising(2, 4.0));
    REQUIRE(two.size() == 1);
    CHECK(two.terms()[0].coefficient == -1.0);
    REQUIRE(two.terms()[0].factors.size() == 2);
    CHECK(two.terms()[0].factors[0].site == 0);
    CHECK(two.terms()[0].factors[0].axis == PauliAxis::z);
    CHECK(two.terms()[0].factors[1].site == 1);

    auto x2 = heisenberg_terms(testing::xyz(2, 3.0));
    REQUIRE(x2.size() == 3);
    std::vector<double> coeffs;
    for (const auto& t : x2.terms()) coeffs.push_back(t.coefficient);
    std::sort(coeffs.begin(), coeffs.end());
    CHECK(coeffs == std::vector<double>{-1.0, -0.5, -0.25});

    for (int L : {3, 7, 12}) CHECK(heisenberg_terms(testing::xyz(L, 0.0)).size() == std::size_t(3 * L * (L - 1) / 2));
}

TEST_CASE("term list validation") {
    TermList t(3);
    t.add(0.0, {{0, PauliAxis::x}});
    CHECK(t.empty());
    CHECK_THROWS(t.add(1.0, {{0, PauliAxis::x}, {0, PauliAxis::z}}));
    CHECK_THROWS(t.add(1.0, {{3, PauliAxis::x}}));
    CHECK(sx_pair_terms(5).size() == 10);
}

TEST_CASE("apply_terms examples") {
    TermList empty(4);
    auto psi = random_vector(4, 1);
    CHECK(apply_terms(empty, psi).norm() == 0.0);

    auto zz = heisenberg_terms(testing::ising(2, 0.0));
    Eigen::VectorXcd up = Eigen::VectorXcd::Zero(4);
    up(0) = 1.0;
    CHECK((apply_terms(zz, up) + up).norm() == 0.0);

    CompiledTerms compiled(sx_pair_terms(3));
    CHECK_THROWS_AS(compiled.apply(Eigen::VectorXcd::Zero(4)), ConfigError);
}

TEST_CASE("apply_terms is Hermitian") {
    auto terms = heisenberg_terms(testing::xyz(10, 1.5));
    CompiledTerms h(terms);
    auto psi = random_vector(10, 2);
    auto phi = random_vector(10, 3);
    const cplx e = psi.dot(h.apply(psi));
    CHECK(std::abs(e.imag()) <= 1e-12);
    const cplx a = phi.dot(h.apply(psi));
    const cplx b = psi.dot(h.apply(phi));
    CHECK(std::abs(a - std::conj(b)) <= 1e-12);
}

TEST_CASE("apply_terms agrees with the Kronecker construction") {
    auto dis = sample_disorder(testing::chain(6), 1.0, 5);
    dis.axes[0] = 0.3 * dis.z();
    dis.axes[1] = -0.7 * dis.z().transpose();
    std::vector<TermList> cases = {heisenberg_terms(testing::xyz(5, 3.0)), heisenberg_terms(dis), sx_pair_terms(6)};
    TermList mixed(4);
    mixed.add(0.3, {{2, PauliAxis::y}});
    mixed.add(-1.1, {{0, PauliAxis::x}, {3, PauliAxis::y}});
    mixed.add(0.7, {{1, PauliAxis::z}});
    cases.push_back(mixed);
    for (const auto& terms : cases) {
        auto psi = random_vector(terms.site_count(), 9);
        Eigen::VectorXcd dense = testing::dense_operator(terms) * psi;
        CHECK((apply_terms(terms, psi) - dense).cwiseAbs().maxCoeff() <= 1e-13);
    }
}
