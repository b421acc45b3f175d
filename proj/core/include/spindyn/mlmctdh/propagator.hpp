#pragma once

#include <functional>
#include <span>
#include <vector>

#include "spindyn/hamiltonian.hpp"
#include "spindyn/mlmctdh/tree_state.hpp"

namespace spindyn::mlmctdh {

struct PropagationOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    /// Density-matrix regulator: eigenvalues become lambda + eps * exp(-lambda / eps).
    double regularization = 1e-8;
    double initial_step = 1e-3;
    double min_step = 1e-12;
    long max_steps = 50'000'000;
    /// Orthonormality residual that aborts the run.
    double orthonormality_limit = 1e-6;
    /// Residual above which SPFs are re-orthonormalized after a step.
    double repair_threshold = 1e-12;
};

struct PropagationReport {
    long accepted_steps = 0;
    long rejected_steps = 0;
    long rhs_evaluations = 0;
    double max_orthonormality_residual = 0.0;  // at output times
    double max_norm_error = 0.0;               // | <Psi|Psi> - 1 | at output times
    double max_norm_repair = 0.0;              // largest per-step norm correction applied
    double max_energy_drift = 0.0;             // | E(t) - E(0) | at output times
    double min_population = 1.0;
    /// Time spent with at least one node below the regularization scale.
    double regularized_time = 0.0;
};

/// Integrates the tree equations of motion with an adaptive Dormand-Prince
/// 5(4) scheme, stopping exactly on each grid time. t_grid[0] must equal the
/// state's time; observer sees the state at every grid point.
PropagationReport propagate_each(TreeState& state, const TermList& hamiltonian, std::span<const double> t_grid,
                                 const std::function<void(const TreeState&)>& observer,
                                 const PropagationOptions& options = {});

std::vector<TreeState> propagate(const TreeState& initial, const TermList& hamiltonian,
                                 std::span<const double> t_grid, const PropagationOptions& options = {});

}  // namespace spindyn::mlmctdh
