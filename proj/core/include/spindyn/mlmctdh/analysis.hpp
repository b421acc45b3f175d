#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spindyn/ed.hpp"
#include "spindyn/mlmctdh/tree_state.hpp"

namespace spindyn::mlmctdh {

/// Reduced density matrix of every non-root node over its SPFs (root entry is
/// 1x1 and holds <Psi|Psi>).
std::vector<Eigen::MatrixXcd> density_matrices(const TreeState& state);

struct NaturalSpectrum {
    int node = 0;
    /// Descending, normalized to unit sum.
    std::vector<double> populations;
};

NaturalSpectrum natural_populations(const TreeState& state, int node);

/// Smallest natural population of every node whose SPF count is below its
/// subspace bound; empty if the tree is full rank everywhere.
std::vector<double> truncated_tail(const TreeState& state);

/// Entropy of the cut separating a node's subtree from the rest of the tree.
double entanglement_entropy(const TreeState& state, int node);

/// Entropy of the cut between the given lattice sites and the rest. Throws
/// ConfigError naming the closest tree-compatible blocks if no node matches.
double entanglement_entropy(const TreeState& state, std::span<const int> sites);

double expect_site(const TreeState& state, int site, PauliAxis axis);
double expect_pair(const TreeState& state, int i, PauliAxis a, int j, PauliAxis b);

/// <S_x> and <S_x^2> through tree contractions of sum_i sigma^x_i and
/// sum_{i != j} sigma^x_i sigma^x_j.
ed::CollectiveX collective_x(const TreeState& state);

}  // namespace spindyn::mlmctdh
