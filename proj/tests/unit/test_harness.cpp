#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spindyn/common.hpp"
#include "spindyn/harness.hpp"

using namespace spindyn;
namespace sh = spindyn::harness;

namespace {

sh::RunConfig small_ising() {
    sh::RunConfig c;
    c.name = "small";
    c.extents = {8};
    c.alpha = 3.0;
    c.t_step = 0.1;
    c.backends = {sh::Backend::ed, sh::Backend::oracle};
    c.output.clear();
    return c;
}

sh::RunConfig parse(const std::string& text) {
    std::istringstream is(text);
    return sh::read_config(is);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
    auto c = parse(
        "[run]\nname = demo\nbackends = mlmctdh, ed\nt_max = 2\nt_step = 0.05\n"
        "[lattice]\ngeometry = square2d\nextents = 4 4\n"
        "[model]\nkind = xyz\nalpha = 3\nmode = nearest_neighbor\n"
        "[mlmctdh]\ntree = 16->[2]4->[14]1\nplaquette = 2x2\nseed_unoccupied = no\n"
        "[dtwa]\nn_t = 300\ndt = 0.001\n");
    CHECK(c.name == "demo");
    CHECK(c.backends == std::vector{sh::Backend::mlmctdh, sh::Backend::ed});
    CHECK(c.geometry == Geometry::square2d);
    CHECK(c.extents == std::vector<int>{4, 4});
    CHECK(c.site_count() == 16);
    CHECK(c.J == std::array<double, 3>{0.5, 1.0, 0.25});
    CHECK(c.mode == CouplingMode::nearest_neighbor);
    CHECK_FALSE(c.seed_unoccupied);
    CHECK(c.plaquette == std::array<int, 2>{2, 2});
    CHECK(c.dtwa_dt == 0.001);
    CHECK(sh::time_grid(c).size() == 41);
    CHECK(sh::time_grid(c).back() == 2.0);
    CHECK_NOTHROW(sh::validate(c));

    CHECK_THROWS_AS(parse("[run]\nbakends = ed\n"), ConfigError);
    CHECK_THROWS_AS(parse("[runs]\nname = x\n"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nalpha = three\n"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nJ = 1 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("[run]\nbackends = ed, tebd\n"), ConfigError);
    CHECK_THROWS_AS(parse("[run\nname = x\n"), ConfigError);
    CHECK_THROWS_AS(sh::load_config("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("config text round trip") {
    for (const auto& name : {"fig2a", "fig3b", "fig6c"}) {
        const auto c = sh::preset(name);
        std::stringstream ss;
        sh::write_config(ss, c);
        const auto back = sh::read_config(ss);
        std::stringstream again;
        sh::write_config(again, back);
        std::stringstream first;
        sh::write_config(first, c);
        CHECK(again.str() == first.str());
    }
}

TEST_CASE("validation") {
    auto c = small_ising();
    CHECK_NOTHROW(sh::validate(c));

    auto x = c;
    x.model = sh::Model::xyz;
    x.J = {0.5, 1.0, 0.25};
    CHECK_THROWS_AS(sh::validate(x), ConfigError);  // oracle needs Ising couplings

    auto big = c;
    big.extents = {20};
    CHECK_THROWS_AS(sh::validate(big), ConfigError);
    big.ed_max_sites = 20;
    CHECK_NOTHROW(sh::validate(big));

    auto tree = c;
    tree.backends = {sh::Backend::mlmctdh};
    CHECK_THROWS_AS(sh::validate(tree), ConfigError);
    tree.tree = "16->[2]4->[12]1";
    CHECK_THROWS_AS(sh::validate(tree), ConfigError);
    tree.tree = "8->[2]4->[4]2->[16]1";
    CHECK_NOTHROW(sh::validate(tree));

    auto reps = c;
    reps.realizations = 3;
    CHECK_THROWS_AS(sh::validate(reps), ConfigError);
    reps.model = sh::Model::disordered_ising;
    CHECK_NOTHROW(sh::validate(reps));

    auto grid = c;
    grid.t_step = 0.07;
    CHECK_THROWS_AS(sh::validate(grid), ConfigError);
    auto dup = c;
    dup.backends = {sh::Backend::ed, sh::Backend::ed};
    CHECK_THROWS_AS(sh::validate(dup), ConfigError);
    auto bad_ising = c;
    bad_ising.J = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(sh::validate(bad_ising), ConfigError);
}

TEST_CASE("presets") {
    const auto names = sh::preset_names();
    for (int f = 2; f <= 6; ++f)
        for (char p : std::string("abcdef")) {
            const auto n = "fig" + std::to_string(f) + p;
            CHECK(std::find(names.begin(), names.end(), n) != names.end());
        }
    for (const auto& n : names) {
        CAPTURE(n);
        const auto c = sh::preset(n);
        CHECK_NOTHROW(sh::validate(c));
        CHECK(c.t_max == 3.0);
    }
    CHECK_THROWS_AS(sh::preset("fig7a"), ConfigError);

    auto f2 = sh::preset("fig2e");
    CHECK(f2.site_count() == 32);
    CHECK(f2.alpha == 3.0);
    CHECK(f2.tree == "32->[2]16->[4]4->[12]1");
    auto f3 = sh::preset("fig3a");
    CHECK(f3.model == sh::Model::disordered_ising);
    CHECK(f3.realizations == 100);
    CHECK(f3.tree == "32->[2]16->[4]4->[22]1");
    CHECK(sh::preset("fig4f").tree == "32->[2]16->[4]4->[16]1");
    auto f5 = sh::preset("fig5d");
    CHECK(f5.J == std::array<double, 3>{0.5, 1.0, 0.25});
    CHECK(f5.tree == "16->[2]4->[10]1");
    CHECK(sh::preset("fig5c").tree == "16->[2]4->[12]1");
    auto f6 = sh::preset("fig6a");
    CHECK(f6.site_count() == 128);
    CHECK(f6.mode == CouplingMode::nearest_neighbor);
    CHECK(f6.tree == "128->[2]64->[4]16->[10]4->[18]1");
    CHECK(sh::preset("fig6b").tree == "16->[2]4->[8]1");
    CHECK(sh::preset("fig6f").tree == "16->[2]4->[14]1");
    CHECK(sh::preset("fig6f").geometry == Geometry::square2d);
}

TEST_CASE("run compares backends and writes reproducible files") {
    const auto dir = std::filesystem::temp_directory_path() / "spindyn_harness_test";
    std::filesystem::remove_all(dir);
    auto c = small_ising();
    c.backends = {sh::Backend::ed, sh::Backend::oracle, sh::Backend::dtwa};
    c.n_t = 200;
    c.output = dir.string();
    const auto r = sh::run(c, 1);
    CHECK(r.deviations.at("ed_vs_oracle").at("Sx") <= 1e-8);
    CHECK(r.deviations.at("ed_vs_oracle").at("dSx") <= 1e-8);
    CHECK(r.series.at(sh::Backend::ed).svn.has_value());
    CHECK(r.series.at(sh::Backend::dtwa).sx_stderr.has_value());
    CHECK(std::filesystem::exists(dir / "summary.json"));
    const auto first = slurp(dir / "dtwa.csv");
    const auto first_ed = slurp(dir / "ed.csv");
    sh::run(c, 3);
    CHECK(slurp(dir / "dtwa.csv") == first);
    CHECK(slurp(dir / "ed.csv") == first_ed);
    std::filesystem::remove_all(dir);
}

TEST_CASE("tree backend on a square lattice") {
    sh::RunConfig c;
    c.geometry = Geometry::square2d;
    c.extents = {4, 2};
    c.model = sh::Model::xyz;
    c.J = {0.5, 1.0, 0.25};
    c.mode = CouplingMode::nearest_neighbor;
    c.t_max = 1.0;
    c.t_step = 0.25;
    c.backends = {sh::Backend::mlmctdh, sh::Backend::ed};
    c.tree = "8->[2]2->[16]1";
    c.rtol = 1e-10;
    c.atol = 1e-12;
    c.output.clear();
    CHECK(sh::quarter_block(c) == std::vector<int>{0, 1});
    const auto r = sh::run(c, 1);
    CHECK(r.deviations.at("mlmctdh_vs_ed").at("Sx") <= 1e-6);
    CHECK(r.deviations.at("mlmctdh_vs_ed").at("dSx") <= 1e-6);

    auto bad = c;
    bad.plaquette = std::array<int, 2>{4, 2};
    CHECK_THROWS_AS(sh::validate(bad), ConfigError);
}

TEST_CASE("disorder ensembles share couplings across backends") {
    auto c = small_ising();
    c.model = sh::Model::disordered_ising;
    c.mode = CouplingMode::disordered_powerlaw;
    c.extents = {6};
    c.realizations = 4;
    c.base_seed = 40;
    const auto r = sh::run(c, 2);
    const auto& s = r.series.at(sh::Backend::oracle);
    CHECK(s.sx_stderr.has_value());
    CHECK(s.metadata.at("realizations") == "4");
    CHECK(s.metadata.at("seeds") == "40..43");
    CHECK(r.deviations.at("ed_vs_oracle").at("Sx") <= 1e-8);
    CHECK(sh::couplings_for(c, 2).seed == std::uint64_t{42});
}

TEST_CASE("convergence scan") {
    CHECK(sh::with_bottleneck("12->[2]6->[4]3->[8]1", 16) == "12->[2]6->[4]3->[16]1");
    CHECK_THROWS_AS(sh::with_bottleneck("12", 3), ConfigError);

    auto c = small_ising();
    c.alpha = 0.0;
    c.t_step = 0.25;
    c.backends = {sh::Backend::mlmctdh, sh::Backend::oracle};
    c.tree = "8->[2]4->[4]2->[16]1";
    c.rtol = 1e-10;
    c.atol = 1e-12;
    const auto rep = sh::converge(c, {1, 16});
    CHECK(rep.reference == sh::Backend::ed);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].max_dev_sx > 0.1);  // mean-field only
    CHECK(rep.rows[1].max_dev_sx <= 1e-6);
    CHECK(rep.monotone());
    std::ostringstream os;
    sh::write_convergence(os, rep);
    CHECK(os.str().find("8->[2]4->[4]2->[1]1") != std::string::npos);

    auto no_tree = small_ising();
    CHECK_THROWS_AS(sh::converge(no_tree, {2}), ConfigError);
}

TEST_CASE("deviation helper") {
    ObservableSeries a, b;
    a.t = b.t = {0.0, 1.0};
    a.sx = {1.0, 2.0};
    b.sx = {1.0, 2.5};
    a.dsx = b.dsx = {0.0, 0.0};
    const auto d = sh::max_deviation(a, b);
    CHECK(d.at("Sx") == 0.5);
    CHECK(d.count("SvN") == 0);
    b.t[1] = 1.1;
    CHECK_THROWS_AS(sh::max_deviation(a, b), ConfigError);
}

TEST_CASE("worker count from the environment") {
    ::setenv("SPINDYN_WORKERS", "3", 1);
    CHECK(sh::default_workers() == 3);
    ::setenv("SPINDYN_WORKERS", "zero", 1);
    CHECK_THROWS_AS(sh::default_workers(), ConfigError);
    ::unsetenv("SPINDYN_WORKERS");
    CHECK(sh::default_workers() >= 1);
}
