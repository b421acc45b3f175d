#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spindyn/lattice.hpp"
#include "spindyn/observables.hpp"

namespace spindyn::harness {

enum class Model { ising, xyz, disordered_ising };
enum class Backend { mlmctdh, dtwa, ed, oracle };

std::string to_string(Model m);
Model parse_model(const std::string& text);
std::string to_string(Backend b);
Backend parse_backend(const std::string& text);

/// One scenario: lattice, couplings, time grid and the backends to run.
struct RunConfig {
    std::string name = "run";
    Geometry geometry = Geometry::chain1d;
    std::vector<int> extents = {8};
    Model model = Model::ising;
    double alpha = 0.0;
    std::array<double, 3> J = {0.0, 0.0, 1.0};
    CouplingMode mode = CouplingMode::powerlaw;
    double t_max = 3.0;
    double t_step = 0.02;
    std::vector<Backend> backends = {Backend::oracle};

    // mlmctdh
    std::string tree;
    double rtol = 1e-8;
    double atol = 1e-10;
    double regularization = 1e-8;
    bool seed_unoccupied = true;
    /// Leaf plaquette for 2D trees, e.g. {2, 2}; derived from the leaf size when unset.
    std::optional<std::array<int, 2>> plaquette;

    // dtwa
    int n_t = 10000;
    std::optional<double> dtwa_dt;
    std::uint64_t dtwa_seed = 1;

    // disorder
    int realizations = 1;
    std::uint64_t base_seed = 1;

    int ed_max_sites = 16;
    std::string output = "out";

    int site_count() const;
};

/// Reads the INI form (sections run, lattice, model, mlmctdh, dtwa, disorder).
/// Unknown keys are rejected so that typos surface as configuration errors.
RunConfig read_config(std::istream& is);
RunConfig load_config(const std::string& path);
void write_config(std::ostream& os, const RunConfig& config);

/// Throws ConfigError for incompatible backend/model pairs and guard violations.
void validate(const RunConfig& config);

std::vector<double> time_grid(const RunConfig& config);

/// The coupling realization shared by all backends of one run.
CouplingMatrix couplings_for(const RunConfig& config, int realization);

/// Sites of the quarter-system block used for S_vN: the first L/4 chain sites,
/// or the top-left (Lx/2 x Ly/2) block on a square lattice.
std::vector<int> quarter_block(const RunConfig& config);

struct BackendDiagnostics {
    double seconds = 0.0;
    std::map<std::string, double> values;
};

struct RunResult {
    std::map<Backend, ObservableSeries> series;
    std::map<Backend, BackendDiagnostics> diagnostics;
    /// "a_vs_b" -> column -> max |a - b| over the grid.
    std::map<std::string, std::map<std::string, double>> deviations;
};

/// Runs every backend (over all disorder realizations) and, when output is
/// nonempty, writes <output>/<backend>.csv and <output>/summary.json.
/// Worker threads default to SPINDYN_WORKERS, else the hardware concurrency.
RunResult run(const RunConfig& config, int workers = 0);

/// Single-backend, single-realization series. Exposed for tests and tools.
ObservableSeries run_backend(const RunConfig& config, Backend backend, int realization,
                             BackendDiagnostics* diagnostics = nullptr);

/// Max |a - b| per shared column (Sx, dSx, SvN, natpop_tail); throws on grid mismatch.
std::map<std::string, double> max_deviation(const ObservableSeries& a, const ObservableSeries& b);

struct ConvergenceRow {
    int m = 0;
    std::string tree;
    double max_dev_sx = 0.0;
    double max_dev_dsx = 0.0;
    double seconds = 0.0;
    bool non_monotone = false;
};

struct ConvergenceReport {
    Backend reference = Backend::ed;
    std::vector<ConvergenceRow> rows;
    bool monotone() const;
};

/// Replaces the last bracketed label of the tree by each m in turn and compares
/// the first realization against ED (if allowed) or the oracle.
ConvergenceReport converge(const RunConfig& config, const std::vector<int>& m_values);
void write_convergence(std::ostream& os, const ConvergenceReport& report);

/// Tree string with its last bracketed label replaced by m.
std::string with_bottleneck(const std::string& tree, int m);

/// Figure-panel presets fig2a..fig6f (plus fig2g..fig2i, the entropy panels).
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

/// Worker count from SPINDYN_WORKERS, falling back to the hardware concurrency.
int default_workers();

}  // namespace spindyn::harness
