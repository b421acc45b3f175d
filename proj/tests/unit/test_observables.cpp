#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spindyn/ed.hpp"
#include "spindyn/ising_oracle.hpp"
#include "spindyn/observables.hpp"
#include "test_support.hpp"

using namespace spindyn;

TEST_CASE("assemble") {
    std::vector<double> ones(5, 1.0);
    auto c = assemble(ones, Eigen::MatrixXd::Ones(5, 5));
    CHECK(c.sx == 5.0);
    CHECK(c.dsx == 0.0);

    std::vector<double> zeros(2, 0.0);
    Eigen::MatrixXd two = Eigen::MatrixXd::Zero(2, 2);
    two(0, 1) = two(1, 0) = 1.0;
    CHECK(assemble(zeros, two).dsx == 4.0);
}

TEST_CASE("assemble matches operator evaluation") {
    for (unsigned seed : {1u, 2u, 3u}) {
        ed::StateVector s{6, testing::random_vector(6, seed)};
        std::vector<double> one(6);
        Eigen::MatrixXd pair = Eigen::MatrixXd::Zero(6, 6);
        for (int i = 0; i < 6; ++i) {
            one[i] = ed::expect_site(s, i, PauliAxis::x);
            for (int j = 0; j < 6; ++j)
                if (i != j) pair(i, j) = ed::expect_pair(s, i, PauliAxis::x, j, PauliAxis::x);
        }
        auto a = assemble(one, pair);
        auto direct = ed::collective_x(s);
        CHECK(std::abs(a.sx - direct.sx) <= 1e-10);
        CHECK(std::abs(a.dsx - direct.dsx()) <= 1e-10);

        // relabel sites consistently
        std::vector<int> perm = {3, 0, 5, 1, 4, 2};
        std::vector<double> one_p(6);
        Eigen::MatrixXd pair_p(6, 6);
        for (int i = 0; i < 6; ++i) {
            one_p[i] = one[perm[i]];
            for (int j = 0; j < 6; ++j) pair_p(i, j) = pair(perm[i], perm[j]);
        }
        auto b = assemble(one_p, pair_p);
        CHECK(b.sx == doctest::Approx(a.sx).epsilon(1e-14));
        CHECK(b.dsx == doctest::Approx(a.dsx).epsilon(1e-14));
    }
}

TEST_CASE("oracle primitives assemble to ED at L=8") {
    auto cpl = testing::ising(8, 3.0);
    oracle::IsingCase c(cpl);
    std::vector<double> one(8);
    Eigen::MatrixXd pair = Eigen::MatrixXd::Zero(8, 8);
    for (int i = 0; i < 8; ++i) {
        one[i] = oracle::one_point_x(c, i, 1.0);
        for (int j = 0; j < 8; ++j)
            if (i != j) pair(i, j) = oracle::two_point_x(c, i, j, 1.0);
    }
    std::vector<double> t = {0.0, 1.0};
    auto snaps = ed::propagate(ed::prepare_x_polarized(8), heisenberg_terms(cpl), t);
    CHECK(std::abs(assemble(one, pair).dsx - ed::collective_x(snaps[1]).dsx()) <= 1e-8);
}

namespace {
ObservableSeries sample(double shift) {
    ObservableSeries s;
    s.t = {0.0, 0.5, 1.0};
    s.sx = {4.0, 3.0 + shift, 2.0};
    s.dsx = {0.0, 1.5, 2.0 - shift};
    s.svn = std::vector<double>{0.0, 0.1, 0.2 + shift};
    s.metadata["backend"] = "oracle";
    return s;
}
}  // namespace

TEST_CASE("ensemble average") {
    std::vector<ObservableSeries> one = {sample(0.0)};
    auto m1 = ensemble_average(one);
    CHECK(m1.sx == one[0].sx);
    for (double e : *m1.sx_stderr) CHECK(e == 0.0);

    std::vector<ObservableSeries> same = {sample(0.0), sample(0.0)};
    auto m2 = ensemble_average(same);
    CHECK(m2.dsx == same[0].dsx);
    for (double e : *m2.dsx_stderr) CHECK(e == 0.0);

    std::vector<ObservableSeries> diff = {sample(0.0), sample(1.0)};
    auto m3 = ensemble_average(diff);
    CHECK(m3.sx[1] == 3.5);
    CHECK((*m3.sx_stderr)[1] == doctest::Approx(0.5));
    CHECK(m3.svn.has_value());

    auto bad = sample(0.0);
    bad.t[1] = 0.6;
    std::vector<ObservableSeries> mismatched = {sample(0.0), bad};
    CHECK_THROWS(ensemble_average(mismatched));
}

TEST_CASE("csv round trip") {
    auto s = sample(0.123456789012345);
    std::stringstream ss;
    write_csv(ss, s);
    const auto text = ss.str();
    CHECK(text.rfind("# backend: oracle", 0) == 0);
    auto back = read_csv(ss);
    CHECK(back.t == s.t);
    CHECK(back.sx == s.sx);
    CHECK(back.dsx == s.dsx);
    REQUIRE(back.svn.has_value());
    CHECK(*back.svn == *s.svn);
    CHECK(back.metadata.at("backend") == "oracle");

    const auto dir = std::filesystem::temp_directory_path() / "spindyn_csv_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "series.csv").string();
    write_csv_atomic(path, s);
    write_csv_atomic(path, s);
    std::ifstream in(path);
    std::stringstream again;
    again << in.rdbuf();
    CHECK(again.str() == text);
    std::filesystem::remove_all(dir);
}
