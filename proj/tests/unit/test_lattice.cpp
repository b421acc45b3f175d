#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spindyn/common.hpp"
#include "spindyn/lattice.hpp"

using namespace spindyn;

namespace {
LatticeSpec chain(int L) { return build_lattice(Geometry::chain1d, std::vector<int>{L}); }
}  // namespace

TEST_CASE("lattice extents and distances") {
    auto c = chain(32);
    CHECK(c.site_count() == 32);
    CHECK(c.distance(0, 3) == 3.0);

    auto sq = build_lattice(Geometry::square2d, std::vector<int>{4, 4});
    CHECK(sq.site_count() == 16);
    CHECK(sq.distance(0, 5) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(sq.adjacent(0, 1));
    CHECK(sq.adjacent(0, 4));
    CHECK_FALSE(sq.adjacent(0, 5));
    CHECK_FALSE(sq.adjacent(3, 4));  // row wrap is not a bond

    CHECK(chain(128).site_count() == 128);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            if (i != j) CHECK(sq.distance(i, j) > 0.0);
}

TEST_CASE("lattice rejects bad extents") {
    CHECK_THROWS_AS(build_lattice(Geometry::chain1d, std::vector<int>{0}), ConfigError);
    CHECK_THROWS_AS(build_lattice(Geometry::square2d, std::vector<int>{4, -1}), ConfigError);
    CHECK_THROWS_AS(build_lattice(Geometry::square2d, std::vector<int>{4}), ConfigError);
}

TEST_CASE("power-law and nearest-neighbour couplings") {
    auto a0 = build_couplings(chain(3), 0.0, {0, 0, 1}, CouplingMode::powerlaw);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(a0.z()(i, j) == (i == j ? 0.0 : 1.0));

    auto a3 = build_couplings(chain(5), 3.0, {0, 0, 1}, CouplingMode::powerlaw);
    CHECK(a3.z()(0, 2) == 1.0 / 8.0);
    auto a6 = build_couplings(chain(5), 6.0, {0.5, 1.0, 0.25}, CouplingMode::powerlaw);
    CHECK(a6.z()(1, 3) == 0.25 / 64.0);
    CHECK(a6.x()(1, 3) == 0.5 / 64.0);
    CHECK(a6.y()(1, 3) == 1.0 / 64.0);

    auto nn = build_couplings(chain(3), 2.0, {0, 0, 1}, CouplingMode::nearest_neighbor);
    CHECK(nn.z()(0, 1) == 1.0);
    CHECK(nn.z()(0, 2) == 0.0);

    CHECK(a0.is_ising());
    CHECK_FALSE(a6.is_ising());
    CHECK_THROWS_AS(build_couplings(chain(3), -1.0, {0, 0, 1}, CouplingMode::powerlaw), ConfigError);
    CHECK_THROWS_AS(build_couplings(chain(3), 1.0, {0, 0, 1}, CouplingMode::disordered_powerlaw), ConfigError);
}

TEST_CASE("coupling matrices are symmetric with zero diagonal") {
    auto sq = build_lattice(Geometry::square2d, std::vector<int>{3, 4});
    std::vector<CouplingMatrix> all = {
        build_couplings(sq, 3.0, {0.5, 1.0, 0.25}, CouplingMode::powerlaw),
        build_couplings(sq, 0.0, {1, 1, 1}, CouplingMode::nearest_neighbor),
        sample_disorder(sq, 6.0, 99),
    };
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> site(0, sq.site_count() - 1);
    for (const auto& c : all)
        for (int b = 0; b < 3; ++b) {
            CHECK(c.axes[b].diagonal().cwiseAbs().maxCoeff() == 0.0);
            for (int k = 0; k < 50; ++k) {
                const int i = site(rng), j = site(rng);
                CHECK(c.axes[b](i, j) == c.axes[b](j, i));
            }
        }
}

TEST_CASE("disorder sampling") {
    auto lat = chain(12);
    auto d1 = sample_disorder(lat, 0.0, 7);
    auto d2 = sample_disorder(lat, 0.0, 7);
    CHECK(d1.z() == d2.z());
    CHECK(d1.z().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(d1.x().cwiseAbs().maxCoeff() == 0.0);
    CHECK(d1.y().cwiseAbs().maxCoeff() == 0.0);
    CHECK(d1.seed == std::uint64_t{7});
    CHECK(sample_disorder(lat, 0.0, 8).z() != d1.z());

    // alpha only rescales the same amplitudes
    auto d3 = sample_disorder(lat, 3.0, 7);
    CHECK(d3.z()(0, 2) == doctest::Approx(d1.z()(0, 2) / 8.0).epsilon(1e-15));

    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3, 3);
    u(0, 2) = u(2, 0) = 0.5;
    auto composed = compose_disorder(chain(3), 3.0, u);
    CHECK(composed.z()(0, 2) == 0.0625);
    CHECK(composed.mode == CouplingMode::disordered_powerlaw);
}

TEST_CASE("disorder amplitudes have zero mean") {
    auto lat = chain(142);  // 10011 pairs
    auto d = sample_disorder(lat, 0.0, 2024);
    double sum = 0.0;
    long n = 0;
    for (int i = 0; i < 142; ++i)
        for (int j = i + 1; j < 142; ++j, ++n) sum += d.z()(i, j);
    CHECK(n >= 10000);
    CHECK(std::abs(sum / n) <= 4.0 / std::sqrt(static_cast<double>(n)) / std::sqrt(3.0));
}

TEST_CASE("coupling text format round trip") {
    auto c = sample_disorder(build_lattice(Geometry::square2d, std::vector<int>{2, 3}), 3.0, 11);
    std::stringstream ss;
    write_couplings(ss, c);
    auto back = read_couplings(ss);
    CHECK(back.site_count() == 6);
    CHECK(back.alpha == 3.0);
    CHECK(back.mode == CouplingMode::disordered_powerlaw);
    CHECK(back.seed == std::uint64_t{11});
    for (int b = 0; b < 3; ++b) CHECK(back.axes[b] == c.axes[b]);
    CHECK(fingerprint(back) == fingerprint(c));

    std::stringstream bad("2 0 powerlaw -\n0 1\n2 0\n0 0\n0 0\n0 0\n0 0\n");
    CHECK_THROWS_AS(read_couplings(bad), ConfigError);
}

TEST_CASE("enum text forms") {
    CHECK(parse_coupling_mode(to_string(CouplingMode::nearest_neighbor)) == CouplingMode::nearest_neighbor);
    CHECK(parse_geometry(to_string(Geometry::square2d)) == Geometry::square2d);
    CHECK_THROWS_AS(parse_geometry("hexagonal"), ConfigError);
}
