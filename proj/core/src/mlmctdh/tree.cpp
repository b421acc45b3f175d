#include "spindyn/mlmctdh/tree.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spindyn/common.hpp"

namespace spindyn::mlmctdh {

TreeTopology::TreeTopology(std::vector<TreeNode> nodes, std::string spec, std::vector<int> layer_units,
                           std::vector<int> layer_spfs)
    : nodes_(std::move(nodes)),
      spec_(std::move(spec)),
      layer_units_(std::move(layer_units)),
      layer_spfs_(std::move(layer_spfs)) {
    std::vector<int> identity(layer_units_.front());
    std::iota(identity.begin(), identity.end(), 0);
    set_site_order(std::move(identity));
}

void TreeTopology::set_site_order(std::vector<int> slot_to_site) {
    const int L = layer_units_.front();
    if (static_cast<int>(slot_to_site.size()) != L) throw ConfigError("site order must list every site once");
    std::vector<int> inverse(L, -1);
    for (int slot = 0; slot < L; ++slot) {
        const int site = slot_to_site[slot];
        if (site < 0 || site >= L || inverse[site] >= 0) throw ConfigError("site order must be a permutation");
        inverse[site] = slot;
    }
    slot_to_site_ = std::move(slot_to_site);
    site_to_slot_ = std::move(inverse);
}

std::vector<int> TreeTopology::leg_dims(int id) const {
    const TreeNode& n = node(id);
    if (n.is_leaf()) return std::vector<int>(n.slots.size(), 2);
    std::vector<int> dims;
    dims.reserve(n.children.size());
    for (int c : n.children) dims.push_back(node(c).spf_count);
    return dims;
}

long TreeTopology::configuration_dimension(int id) const {
    long d = 1;
    for (int x : leg_dims(id)) d *= x;
    return d;
}

std::vector<int> TreeTopology::sites_of(int id) const {
    const TreeNode& n = node(id);
    std::vector<int> out;
    out.reserve(n.slot_count);
    for (int s = n.first_slot; s < n.first_slot + n.slot_count; ++s) out.push_back(slot_to_site_[s]);
    return out;
}

std::vector<int> TreeTopology::post_order() const {
    // Nodes are numbered top-down, layer by layer, so descending ids put children first.
    std::vector<int> order(nodes_.size());
    std::iota(order.rbegin(), order.rend(), 0);
    return order;
}

std::optional<int> TreeTopology::node_for_sites(std::span<const int> sites) const {
    std::vector<int> want(sites.begin(), sites.end());
    std::sort(want.begin(), want.end());
    for (int id = 0; id < node_count(); ++id) {
        auto have = sites_of(id);
        std::sort(have.begin(), have.end());
        if (have == want) return id;
    }
    return std::nullopt;
}

namespace {

std::vector<std::string> split_arrows(const std::string& spec) {
    std::string s;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        // U+2192 RIGHTWARDS ARROW is E2 86 92 in UTF-8.
        if (spec.compare(k, 3, "\xE2\x86\x92") == 0) {
            s += '>';
            k += 2;
        } else if (spec.compare(k, 2, "->") == 0) {
            s += '>';
            k += 1;
        } else if (!std::isspace(static_cast<unsigned char>(spec[k]))) {
            s += spec[k];
        }
    }
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, '>')) parts.push_back(part);
    return parts;
}

int parse_positive(const std::string& text, const std::string& spec) {
    if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw ConfigError("malformed tree spec '" + spec + "': expected a positive integer, got '" + text + "'");
    const int v = std::stoi(text);
    if (v <= 0) throw ConfigError("malformed tree spec '" + spec + "': counts must be positive");
    return v;
}

}  // namespace

TreeTopology parse_tree(const std::string& spec) {
    const auto parts = split_arrows(spec);
    if (parts.size() < 2) throw ConfigError("tree spec '" + spec + "' needs at least one arrow");

    std::vector<int> units{parse_positive(parts[0], spec)};
    std::vector<int> spfs;
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const std::string& p = parts[k];
        if (p.empty() || p[0] != '[') throw ConfigError("tree spec '" + spec + "': each arrow needs a [m] label");
        const auto close = p.find(']');
        if (close == std::string::npos) throw ConfigError("tree spec '" + spec + "': unterminated [m] label");
        spfs.push_back(parse_positive(p.substr(1, close - 1), spec));
        units.push_back(parse_positive(p.substr(close + 1), spec));
    }
    if (units.back() != 1) throw ConfigError("tree spec '" + spec + "' must end at a single root (…1)");
    if (spfs.front() != 2) throw ConfigError("tree spec '" + spec + "': the first label is the spin-1/2 primitive dimension 2");

    const int layers = static_cast<int>(units.size()) - 1;  // node layers 1..layers, root at the top
    std::vector<int> branching(units.size(), 0);
    for (int l = 1; l <= layers; ++l) {
        if (units[l - 1] % units[l] != 0 || units[l] >= units[l - 1])
            throw ConfigError("tree spec '" + spec + "': " + std::to_string(units[l - 1]) +
                              " units cannot be grouped evenly into " + std::to_string(units[l]));
        branching[l] = units[l - 1] / units[l];
    }
    // Subspace bound: a node's SPF count cannot exceed the product of its leg dimensions.
    for (int l = 1; l < layers; ++l) {
        double bound = std::pow(static_cast<double>(spfs[l - 1]), branching[l]);
        if (spfs[l] > bound)
            throw ConfigError("tree spec '" + spec + "': layer " + std::to_string(l) + " requests " +
                              std::to_string(spfs[l]) + " SPFs but its nodes span only " +
                              std::to_string(static_cast<long long>(bound)) + " states");
    }

    // Number nodes from the root downward, layer by layer.
    std::vector<int> layer_offset(layers + 2, 0);
    int total = 0;
    for (int l = layers; l >= 1; --l) {
        layer_offset[l] = total;
        total += units[l];
    }
    std::vector<TreeNode> nodes(total);
    for (int l = layers; l >= 1; --l) {
        for (int k = 0; k < units[l]; ++k) {
            TreeNode& n = nodes[layer_offset[l] + k];
            n.layer = l;
            n.spf_count = l == layers ? 1 : spfs[l];
            const int span = units[0] / units[l];
            n.first_slot = k * span;
            n.slot_count = span;
            for (int c = 0; c < branching[l]; ++c) {
                const int child_index = k * branching[l] + c;
                if (l == 1) {
                    n.slots.push_back(child_index);
                } else {
                    const int child = layer_offset[l - 1] + child_index;
                    n.children.push_back(child);
                    nodes[child].parent = layer_offset[l] + k;
                    nodes[child].leg_in_parent = c;
                }
            }
        }
    }
    return TreeTopology(std::move(nodes), spec, std::move(units), std::move(spfs));
}

std::vector<int> plaquette_order(const LatticeSpec& lattice, int bx, int by) {
    if (bx <= 0 || by <= 0 || lattice.lx() % bx != 0 || lattice.ly() % by != 0)
        throw ConfigError("plaquettes must tile the lattice");
    std::vector<int> order;
    for (int py = 0; py < lattice.ly() / by; ++py)
        for (int px = 0; px < lattice.lx() / bx; ++px)
            for (int y = 0; y < by; ++y)
                for (int x = 0; x < bx; ++x) order.push_back((py * by + y) * lattice.lx() + px * bx + x);
    return order;
}

}  // namespace spindyn::mlmctdh
