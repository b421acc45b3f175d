#include <cmath>
#include <sstream>

#include "doctest.h"
#include "spindyn/ed.hpp"
#include "spindyn/mlmctdh/analysis.hpp"
#include "spindyn/mlmctdh/tree_operator.hpp"
#include "spindyn/mlmctdh/tree_state.hpp"
#include "test_support.hpp"

using namespace spindyn;
using namespace spindyn::mlmctdh;

namespace {
const char* const trees[] = {"8->[2]4->[2]2->[2]1", "8->[2]4->[4]2->[16]1", "12->[2]6->[4]3->[8]1",
                             "12->[2]4->[3]1", "16->[2]4->[12]1"};
}

TEST_CASE("initial state") {
    for (const char* spec : trees) {
        CAPTURE(spec);
        auto top = parse_tree(spec);
        auto s = build_initial_state(top);
        const int L = top.site_count();
        CHECK(orthonormality_residual(s) <= 1e-12);
        CHECK(std::abs(norm_squared(s) - 1.0) <= 1e-14);
        auto cx = collective_x(s);
        CHECK(cx.sx == doctest::Approx(L).epsilon(1e-13));
        CHECK(std::abs(cx.dsx()) <= 1e-11);
        for (int id = 1; id < top.node_count(); ++id) CHECK(std::abs(entanglement_entropy(s, id)) <= 1e-12);
        for (int i = 0; i < L; i += 3) CHECK(expect_site(s, i, PauliAxis::x) == doctest::Approx(1.0));
        CHECK(expect_pair(s, 0, PauliAxis::x, L - 1, PauliAxis::x) == doctest::Approx(1.0));
        auto pops = natural_populations(s, 1).populations;
        CHECK(pops[0] == doctest::Approx(1.0));
        for (std::size_t k = 1; k < pops.size(); ++k) CHECK(std::abs(pops[k]) <= 1e-14);
        auto dense = to_statevector(s);
        CHECK((dense.amplitudes - ed::prepare_x_polarized(L).amplitudes).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(natural_populations(build_initial_state(parse_tree(trees[0])), 0), ConfigError);
}

TEST_CASE("random states contract like their dense reconstruction") {
    auto top = parse_tree("8->[2]4->[3]2->[5]1");
    auto s = random_state(top, 31);
    CHECK(orthonormality_residual(s) <= 1e-12);
    auto dense = to_statevector(s);
    CHECK(std::abs(dense.norm() * dense.norm() - norm_squared(s)) <= 1e-10);

    for (const auto& terms : {heisenberg_terms(testing::xyz(8, 1.0)), sx_pair_terms(8),
                              heisenberg_terms(sample_disorder(testing::chain(8), 0.5, 3))}) {
        const double tree = expectation(s, terms);
        const double ref = ed::expectation(dense, CompiledTerms(terms));
        CHECK(std::abs(tree - ref) <= 1e-10);
    }
    TermList one(8);
    one.add(0.4, {{6, PauliAxis::y}});
    one.add(-1.3, {{1, PauliAxis::z}, {6, PauliAxis::x}});
    CHECK(std::abs(expectation(s, one) - ed::expectation(dense, CompiledTerms(one))) <= 1e-10);
    CHECK_THROWS(TreeOperator(parse_tree("4->[2]2->[4]1"), sx_pair_terms(8)));

    for (int i = 0; i < 8; ++i) {
        CHECK(std::abs(expect_site(s, i, PauliAxis::x) - ed::expect_site(dense, i, PauliAxis::x)) <= 1e-10);
        CHECK(std::abs(expect_site(s, i, PauliAxis::z) - ed::expect_site(dense, i, PauliAxis::z)) <= 1e-10);
    }
    CHECK(std::abs(expect_pair(s, 2, PauliAxis::x, 5, PauliAxis::y) -
                   ed::expect_pair(dense, 2, PauliAxis::x, 5, PauliAxis::y)) <= 1e-10);

    auto cx = collective_x(s);
    auto ref = ed::collective_x(dense);
    CHECK(std::abs(cx.sx - ref.sx) <= 1e-10);
    CHECK(std::abs(cx.sx2 - ref.sx2) <= 1e-10);
    double pair_sum = 8.0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            if (i != j) pair_sum += expect_pair(s, i, PauliAxis::x, j, PauliAxis::x);
    CHECK(std::abs(pair_sum - cx.sx2) <= 1e-10);
}

TEST_CASE("entropy and populations of a random state") {
    auto top = parse_tree("8->[2]4->[4]2->[16]1");
    auto s = random_state(top, 5);
    auto dense = to_statevector(s);
    for (int id = 1; id < top.node_count(); ++id) {
        auto sites = top.sites_of(id);
        const double ref = ed::von_neumann_entropy(ed::reduced_density(dense, sites));
        CHECK(std::abs(entanglement_entropy(s, id) - ref) <= 1e-8);
        CHECK(std::abs(entanglement_entropy(s, std::span<const int>(sites)) - ref) <= 1e-8);
        double sum = 0.0;
        for (double p : natural_populations(s, id).populations) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
    const std::vector<int> bad = {1, 2};
    CHECK_THROWS_AS(entanglement_entropy(s, std::span<const int>(bad)), ConfigError);
    CHECK(truncated_tail(s).empty());
    CHECK(truncated_tail(random_state(parse_tree("8->[2]4->[3]2->[5]1"), 1)).size() == 6);
}

TEST_CASE("site order permutes the dense reconstruction") {
    auto top = parse_tree("4->[2]2->[4]1");
    top.set_site_order({2, 0, 3, 1});
    auto s = random_state(top, 8);
    auto dense = to_statevector(s);
    TermList z(4);
    z.add(1.0, {{3, PauliAxis::z}});
    CHECK(std::abs(expectation(s, z) - ed::expectation(dense, CompiledTerms(z))) <= 1e-12);
    const std::vector<int> block = {0, 2};
    CHECK(std::abs(entanglement_entropy(s, std::span<const int>(block)) -
                   ed::von_neumann_entropy(ed::reduced_density(dense, block))) <= 1e-10);
}

TEST_CASE("Loewdin repair keeps the wavefunction") {
    auto top = parse_tree("8->[2]4->[3]2->[5]1");
    auto s = random_state(top, 12);
    auto before = to_statevector(s).amplitudes;
    for (int id = 1; id < top.node_count(); ++id) s.tensors[id] *= 1.0 + 1e-4 * id;
    s.tensors[3](0, 1) += 1e-3;
    auto skewed = to_statevector(s).amplitudes;
    CHECK(orthonormality_residual(s) > 1e-4);
    CHECK(reorthonormalize(s) > 1e-4);
    CHECK(orthonormality_residual(s) <= 1e-13);
    CHECK((to_statevector(s).amplitudes - skewed).norm() <= 1e-12);
    CHECK((before - skewed).norm() > 1e-4);
}

TEST_CASE("checkpoint round trip") {
    auto top = parse_tree("12->[2]6->[4]3->[8]1");
    top.set_site_order({11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
    auto s = random_state(top, 77);
    s.time = 1.25;
    std::stringstream buf;
    write_checkpoint(buf, s);
    auto back = read_checkpoint(buf);
    CHECK(back.time == 1.25);
    CHECK(back.topology.spec() == top.spec());
    CHECK(back.topology.slot_to_site() == top.slot_to_site());
    REQUIRE(back.tensors.size() == s.tensors.size());
    for (std::size_t k = 0; k < s.tensors.size(); ++k) CHECK(back.tensors[k] == s.tensors[k]);

    std::string bytes = buf.str();
    bytes[0] = 'X';
    std::stringstream corrupt(bytes);
    CHECK_THROWS(read_checkpoint(corrupt));
    std::stringstream truncated(buf.str().substr(0, 40));
    CHECK_THROWS(read_checkpoint(truncated));
}

TEST_CASE("dense reconstruction guard") {
    auto s = build_initial_state(parse_tree("32->[2]16->[4]4->[12]1"));
    CHECK_THROWS_AS(to_statevector(s), ConfigError);
    CHECK(collective_x(s).sx == doctest::Approx(32.0));
}
