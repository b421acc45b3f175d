#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spindyn/lattice.hpp"

namespace spindyn::mlmctdh {

/// One node of a layered tree. Leaf nodes own physical legs (one per spin,
/// dimension 2); every other node owns one leg per child node. The node's own
/// SPF index is the last tensor leg.
struct TreeNode {
    int parent = -1;
    int leg_in_parent = -1;
    std::vector<int> children;
    /// Leaf nodes only: tree slots of the physical legs, in leg order.
    std::vector<int> slots;
    int spf_count = 1;
    /// 1 for leaves, increasing toward the root.
    int layer = 0;
    int first_slot = 0;
    int slot_count = 0;

    bool is_leaf() const { return children.empty(); }
    bool is_root() const { return parent < 0; }
    int leg_count() const { return static_cast<int>(is_leaf() ? slots.size() : children.size()); }
};

/// Symmetric tree over L spins. Physical sites are attached to contiguous tree
/// slots; slot_to_site maps slots onto lattice sites (identity for chains).
class TreeTopology {
public:
    TreeTopology() = default;
    TreeTopology(std::vector<TreeNode> nodes, std::string spec, std::vector<int> layer_units,
                 std::vector<int> layer_spfs);

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& node(int id) const { return nodes_.at(id); }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int root() const { return 0; }
    int site_count() const { return static_cast<int>(slot_to_site_.size()); }
    const std::string& spec() const { return spec_; }

    /// Units per layer from the physical layer up to the root, e.g. {32, 16, 4, 1}.
    const std::vector<int>& layer_units() const { return layer_units_; }
    /// SPF counts per layer as written in the spec string (entry 0 is the primitive dimension 2).
    const std::vector<int>& layer_spfs() const { return layer_spfs_; }

    /// Leg dimensions of a node, own SPF leg excluded.
    std::vector<int> leg_dims(int id) const;
    /// Product of leg dimensions: the size of the space the node's SPFs live in.
    long configuration_dimension(int id) const;

    int site_of_slot(int slot) const { return slot_to_site_.at(slot); }
    int slot_of_site(int site) const { return site_to_slot_.at(site); }
    const std::vector<int>& slot_to_site() const { return slot_to_site_; }
    void set_site_order(std::vector<int> slot_to_site);

    /// Lattice sites in the subtree of a node, in slot order.
    std::vector<int> sites_of(int id) const;
    /// Node ids with every child listed before its parent.
    std::vector<int> post_order() const;
    /// Node whose subtree covers exactly the given lattice sites.
    std::optional<int> node_for_sites(std::span<const int> sites) const;
    /// Root configuration space dimension: product of the root children's SPF counts.
    long root_configuration_dimension() const { return configuration_dimension(root()); }

private:
    std::vector<TreeNode> nodes_;
    std::string spec_;
    std::vector<int> layer_units_;
    std::vector<int> layer_spfs_;
    std::vector<int> slot_to_site_;
    std::vector<int> site_to_slot_;
};

/// Parses the arrow notation "32->[2]16->[4]4->[12]1" (a Unicode arrow is also
/// accepted). Read left to right: 32 spins with primitive dimension 2 are
/// grouped into 16 leaf nodes; each of those carries 4 SPFs; the leaves are
/// grouped into 4 nodes carrying 12 SPFs each, which hang off the root. The
/// bracketed number on an arrow is the basis size of each unit on its left.
TreeTopology parse_tree(const std::string& spec);

/// Slot order that maps each leaf of a 2D tree onto a bx x by plaquette,
/// plaquettes in row-major order, sites row-major inside each plaquette.
std::vector<int> plaquette_order(const LatticeSpec& lattice, int bx, int by);

}  // namespace spindyn::mlmctdh
