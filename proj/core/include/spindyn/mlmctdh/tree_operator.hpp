#pragma once

#include <memory>
#include <vector>

#include "spindyn/hamiltonian.hpp"
#include "spindyn/mlmctdh/tree_state.hpp"

namespace spindyn::mlmctdh {

struct DerivativeDiagnostics {
    /// Smallest natural population seen over all non-root nodes.
    double min_population = 1.0;
    /// Nodes whose smallest population fell below the regularization scale.
    int regularized_nodes = 0;
};

/// A sum-of-products operator compiled against one tree. Two-body couplings
/// crossing each node boundary are compressed into an orthonormal channel
/// basis (SVD of the boundary coupling block), so mean fields scale with the
/// coupling rank rather than the number of terms.
class TreeOperator {
public:
    TreeOperator(const TreeTopology& topology, const TermList& terms);
    ~TreeOperator();
    TreeOperator(TreeOperator&&) noexcept;
    TreeOperator& operator=(TreeOperator&&) noexcept;

    /// <Psi|O|Psi> / <Psi|Psi>, assuming orthonormal SPFs.
    double expectation(const TreeState& state) const;

    /// d/dt of every node tensor for i d/dt Psi = O Psi under the variational
    /// equations of motion. regularization is the density-matrix regulator epsilon.
    void time_derivative(const TreeState& state, std::vector<NodeTensor>& out, double regularization,
                         DerivativeDiagnostics* diagnostics = nullptr) const;
    /// Same, on bare node tensors laid out for the compiled topology.
    void time_derivative(const std::vector<NodeTensor>& tensors, std::vector<NodeTensor>& out, double regularization,
                         DerivativeDiagnostics* diagnostics = nullptr) const;

    /// Replaces the unoccupied SPFs of a product state (weight on SPF 0 only)
    /// by a deterministic block-Krylov sequence of this operator's node-local
    /// pieces acting on SPF 0. The wavefunction is unchanged; the SPFs that
    /// the dynamics populates first become available immediately.
    void seed_unoccupied(TreeState& state) const;

    /// Number of coupling channels crossing the boundary of a node (0 at the root).
    int channel_count(int node) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Convenience: compiles terms and evaluates <Psi|terms|Psi>.
double expectation(const TreeState& state, const TermList& terms);

}  // namespace spindyn::mlmctdh
