#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "spindyn/common.hpp"
#include "spindyn/mlmctdh/tree.hpp"
#include "test_support.hpp"

using namespace spindyn;
using namespace spindyn::mlmctdh;

TEST_CASE("binary eight-spin tree") {
    auto t = parse_tree("8→[2]4→[2]2→[2]1");
    CHECK(t.site_count() == 8);
    CHECK(t.node_count() == 7);
    CHECK(t.layer_units() == std::vector<int>{8, 4, 2, 1});
    CHECK(t.node(0).is_root());
    CHECK(t.node(0).spf_count == 1);
    for (int id = 3; id < 7; ++id) {
        CHECK(t.node(id).is_leaf());
        CHECK(t.node(id).slots.size() == 2);
        CHECK(t.node(id).spf_count == 2);
    }
    CHECK(t.configuration_dimension(0) == 4);
    CHECK(t.configuration_dimension(3) == 4);
}

TEST_CASE("production trees") {
    auto t = parse_tree("32->[2]16->[4]4->[12]1");
    CHECK(t.node_count() == 21);
    CHECK(t.layer_spfs() == std::vector<int>{2, 4, 12});
    CHECK(t.root_configuration_dimension() == 12 * 12 * 12 * 12);
    for (const auto& n : t.nodes())
        if (n.is_leaf()) CHECK(n.slots.size() == 2);
    CHECK(t.leg_dims(1) == std::vector<int>{4, 4, 4, 4});
    CHECK(parse_tree(" 32 -> [2] 16 -> [4] 4 -> [12] 1 ").node_count() == 21);

    auto t2 = parse_tree("16→[2]4→[14]1");
    CHECK(t2.node_count() == 5);
    CHECK(t2.node(1).spf_count == 14);
    CHECK(t2.configuration_dimension(1) == 16);
}

TEST_CASE("post order and subtree sites") {
    auto t = parse_tree("12->[2]6->[4]3->[8]1");
    auto po = t.post_order();
    CHECK(po.back() == 0);
    std::vector<int> pos(t.node_count());
    for (int k = 0; k < t.node_count(); ++k) pos[po[k]] = k;
    for (int id = 1; id < t.node_count(); ++id) CHECK(pos[id] < pos[t.node(id).parent]);

    std::vector<int> all = t.sites_of(0);
    std::vector<int> expect(12);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    const std::vector<int> q = {4, 5, 6, 7};
    auto found = t.node_for_sites(q);
    REQUIRE(found.has_value());
    CHECK(t.sites_of(*found) == q);
    const std::vector<int> nope = {2, 3, 4, 5};
    CHECK_FALSE(t.node_for_sites(nope).has_value());
}

TEST_CASE("malformed tree strings are rejected") {
    for (const char* bad : {"", "8", "8->[2]4", "8->[2]3->[2]1", "8->[3]4->[2]2->[2]1", "8->[2]4->[2]2->[2]2",
                            "8->[2]4->[5]2->[2]1", "8->[2]4->[0]2->[2]1", "8->2]4->[2]1", "8->[2]4->[2]2->[2]1x",
                            "8->[2]4->[4]1->[2]1"})
        CHECK_THROWS_AS(parse_tree(bad), ConfigError);
}

TEST_CASE("site order") {
    auto t = parse_tree("16→[2]4→[14]1");
    auto order = plaquette_order(build_lattice(Geometry::square2d, std::vector<int>{4, 4}), 2, 2);
    CHECK(order == std::vector<int>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
    t.set_site_order(order);
    CHECK(t.sites_of(1) == std::vector<int>{0, 1, 4, 5});
    CHECK(t.slot_of_site(4) == 2);
    CHECK_THROWS_AS(t.set_site_order({0, 0, 1}), ConfigError);
    std::vector<int> dup(16, 0);
    CHECK_THROWS_AS(t.set_site_order(dup), ConfigError);
    CHECK_THROWS_AS(plaquette_order(build_lattice(Geometry::square2d, std::vector<int>{4, 4}), 3, 2), ConfigError);
}
