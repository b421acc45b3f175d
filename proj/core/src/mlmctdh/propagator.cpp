#include "spindyn/mlmctdh/propagator.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "spindyn/mlmctdh/tree_operator.hpp"

namespace spindyn::mlmctdh {

namespace {

using Tensors = std::vector<NodeTensor>;

// Dormand-Prince 5(4) tableau.
constexpr double c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double a[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double e[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

void combine(const Tensors& y, double h, const std::vector<const Tensors*>& ks, const double* w, int count,
             Tensors& out) {
    out.resize(y.size());
    for (std::size_t n = 0; n < y.size(); ++n) {
        out[n] = y[n];
        for (int j = 0; j < count; ++j)
            if (w[j] != 0.0) out[n].noalias() += (h * w[j]) * (*ks[j])[n];
    }
}

double error_norm(const Tensors& y, const Tensors& y_new, const std::vector<const Tensors*>& ks, double h,
                  const PropagationOptions& opt) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t n = 0; n < y.size(); ++n) {
        const long size = y[n].size();
        const cplx* y0 = y[n].data();
        const cplx* y1 = y_new[n].data();
        for (long i = 0; i < size; ++i) {
            cplx err = 0.0;
            for (int j = 0; j < 7; ++j)
                if (e[j] != 0.0) err += e[j] * (*ks[j])[n].data()[i];
            const double scale = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
            sum += std::norm(h * err) / (scale * scale);
        }
        count += size;
    }
    return std::sqrt(sum / std::max(count, 1L));
}

}  // namespace

PropagationReport propagate_each(TreeState& state, const TermList& hamiltonian, std::span<const double> t_grid,
                                 const std::function<void(const TreeState&)>& observer,
                                 const PropagationOptions& opt) {
    if (t_grid.empty()) return {};
    if (std::abs(t_grid[0] - state.time) > 1e-12)
        throw ConfigError("time grid must start at the state's current time");
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        if (!(t_grid[k] > t_grid[k - 1])) throw ConfigError("time grid must be strictly increasing");

    const TreeOperator h_op(state.topology, hamiltonian);
    PropagationReport report;
    const double e0 = h_op.expectation(state);

    auto record = [&] {
        report.max_orthonormality_residual =
            std::max(report.max_orthonormality_residual, orthonormality_residual(state));
        report.max_norm_error = std::max(report.max_norm_error, std::abs(norm_squared(state) - 1.0));
        report.max_energy_drift = std::max(report.max_energy_drift, std::abs(h_op.expectation(state) - e0));
        observer(state);
    };

    std::vector<Tensors> k(7);
    Tensors stage, y_new;
    DerivativeDiagnostics diag;
    auto rhs = [&](const Tensors& y, Tensors& out) {
        h_op.time_derivative(y, out, opt.regularization, &diag);
        ++report.rhs_evaluations;
    };
    std::vector<const Tensors*> kp;
    for (auto& kk : k) kp.push_back(&kk);

    record();
    double h = opt.initial_step;
    bool have_k1 = false;
    for (std::size_t g = 1; g < t_grid.size(); ++g) {
        const double target = t_grid[g];
        while (state.time < target) {
            if (report.accepted_steps + report.rejected_steps >= opt.max_steps)
                throw NumericalError("ML-MCTDH step budget exhausted at t = " + std::to_string(state.time));
            const double remaining = target - state.time;
            const bool clipped = h >= remaining;
            const double step = clipped ? remaining : h;
            if (!have_k1) {
                rhs(state.tensors, k[0]);
                have_k1 = true;
            }
            const DerivativeDiagnostics start_diag = diag;
            for (int j = 1; j < 7; ++j) {
                combine(state.tensors, step, kp, a[j], j, stage);
                rhs(stage, k[j]);
            }
            // Stage 7 is evaluated at the 5th-order solution.
            y_new = std::move(stage);
            double err = error_norm(state.tensors, y_new, kp, step, opt);
            // An overflowing trial step is just a rejected step.
            if (!std::isfinite(err)) err = 1e10;
            const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            if (err <= 1.0) {
                state.tensors.swap(y_new);
                state.time = clipped ? target : state.time + step;
                ++report.accepted_steps;
                report.min_population = std::min(report.min_population, start_diag.min_population);
                if (start_diag.regularized_nodes > 0) report.regularized_time += step;
                const double residual = orthonormality_residual(state);
                if (residual > opt.orthonormality_limit) {
                    std::ostringstream msg;
                    msg << "SPF orthonormality residual " << residual << " exceeds " << opt.orthonormality_limit
                        << " at t = " << state.time << " (step " << step << ", min population "
                        << report.min_population << ")";
                    throw NumericalError(msg.str());
                }
                if (residual > opt.repair_threshold) {
                    reorthonormalize(state);
                    have_k1 = false;
                } else {
                    k[0].swap(k[6]);
                }
                // The root flow is unitary; only integrator error moves the norm.
                NodeTensor& root = state.tensors[state.topology.root()];
                const double n2 = root.squaredNorm();
                report.max_norm_repair = std::max(report.max_norm_repair, std::abs(n2 - 1.0));
                root /= std::sqrt(n2);
                if (have_k1) k[0][state.topology.root()] /= std::sqrt(n2);
                if (!clipped || factor < 1.0) h = step * factor;
            } else {
                ++report.rejected_steps;
                h = step * std::max(factor, 0.2);
                if (h < opt.min_step)
                    throw NumericalError("ML-MCTDH step size underflow at t = " + std::to_string(state.time));
            }
        }
        state.time = target;
        record();
    }
    const double span = t_grid.back() - t_grid.front();
    if (span > 0.0 && report.regularized_time > 0.1 * span)
        std::cerr << "warning: natural populations stayed below the regularization scale for "
                  << report.regularized_time << " of " << span << " time units; SPF basis is oversized\n";
    return report;
}

std::vector<TreeState> propagate(const TreeState& initial, const TermList& hamiltonian,
                                 std::span<const double> t_grid, const PropagationOptions& options) {
    TreeState state = initial;
    std::vector<TreeState> out;
    propagate_each(state, hamiltonian, t_grid, [&](const TreeState& s) { out.push_back(s); }, options);
    return out;
}

}  // namespace spindyn::mlmctdh
