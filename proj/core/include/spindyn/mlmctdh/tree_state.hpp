#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "spindyn/ed.hpp"
#include "spindyn/mlmctdh/tree.hpp"

namespace spindyn::mlmctdh {

/// Node coefficients as a (configuration x SPF) matrix: rows run over the
/// node's legs in row-major order, columns are the node's SPFs.
using NodeTensor = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TreeState {
    TreeTopology topology;
    std::vector<NodeTensor> tensors;
    double time = 0.0;

    int site_count() const { return topology.site_count(); }
};

/// |-> ... ->> on the tree: the first SPF of every node is the product
/// component, the rest are completed by Gram-Schmidt against the canonical basis.
TreeState build_initial_state(const TreeTopology& topology);

/// Orthonormal random SPFs and a normalized random root, reproducible per seed.
TreeState random_state(const TreeTopology& topology, std::uint64_t seed);

/// max_ij |(Phi^dagger Phi - 1)_ij| for one non-root node.
double orthonormality_residual(const TreeState& state, int node);
/// Largest residual over all non-root nodes.
double orthonormality_residual(const TreeState& state);

/// <Psi|Psi>, which equals the squared root norm while SPFs stay orthonormal.
double norm_squared(const TreeState& state);

/// Contracts the tree into a dense 2^L vector. Throws ConfigError above max_sites.
ed::StateVector to_statevector(const TreeState& state, int max_sites = ed::default_max_sites);

/// Restores exact orthonormality by Loewdin symmetric orthonormalization,
/// pushing the overlap square root into the parent. Returns the largest
/// residual found before the repair.
double reorthonormalize(TreeState& state);

/// Versioned binary checkpoint: magic, format version, tree spec, site order,
/// time, then every node tensor.
void write_checkpoint(std::ostream& os, const TreeState& state);
TreeState read_checkpoint(std::istream& is);

inline constexpr std::uint32_t checkpoint_version = 1;

}  // namespace spindyn::mlmctdh
