#include "spindyn/mlmctdh/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mlmctdh/kernels.hpp"
#include "spindyn/mlmctdh/tree_operator.hpp"

namespace spindyn::mlmctdh {

std::vector<Eigen::MatrixXcd> density_matrices(const TreeState& state) {
    const TreeTopology& top = state.topology;
    std::vector<Eigen::MatrixXcd> rho(top.node_count());
    const NodeTensor& root = state.tensors[top.root()];
    rho[top.root()] = root.adjoint() * root;
    for (int id = 0; id < top.node_count(); ++id) {
        const TreeNode& n = top.node(id);
        if (n.is_root()) continue;
        const int q = n.parent;
        const NodeTensor& aq = state.tensors[q];
        auto dims = detail::with_own(top.leg_dims(q), top.node(q).spf_count);
        NodeTensor x(aq.rows(), aq.cols());
        detail::apply_leg(aq.data(), dims, static_cast<int>(dims.size()) - 1,
                          top.node(q).is_root() ? Eigen::MatrixXcd::Identity(1, 1) : rho[q], x.data(), false);
        rho[id] = detail::contract_except(aq.data(), x.data(), dims, n.leg_in_parent);
    }
    return rho;
}

namespace {

std::vector<double> spectrum(const Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    std::vector<double> p(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    const double trace = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& x : p) x /= trace;
    std::sort(p.rbegin(), p.rend());
    return p;
}

void require_non_root(const TreeState& state, int node) {
    if (node < 0 || node >= state.topology.node_count()) throw ConfigError("no tree node " + std::to_string(node));
    if (state.topology.node(node).is_root()) throw ConfigError("the root node has no natural populations");
}

}  // namespace

NaturalSpectrum natural_populations(const TreeState& state, int node) {
    require_non_root(state, node);
    return {node, spectrum(density_matrices(state)[node])};
}

std::vector<double> truncated_tail(const TreeState& state) {
    const TreeTopology& top = state.topology;
    const auto rho = density_matrices(state);
    std::vector<double> tail;
    for (int id = 0; id < top.node_count(); ++id) {
        const TreeNode& n = top.node(id);
        if (n.is_root() || n.spf_count >= top.configuration_dimension(id)) continue;
        tail.push_back(spectrum(rho[id]).back());
    }
    return tail;
}

double entanglement_entropy(const TreeState& state, int node) {
    require_non_root(state, node);
    const auto p = spectrum(density_matrices(state)[node]);
    return ed::von_neumann_entropy(p);
}

double entanglement_entropy(const TreeState& state, std::span<const int> sites) {
    const TreeTopology& top = state.topology;
    if (auto id = top.node_for_sites(sites); id && !top.node(*id).is_root()) return entanglement_entropy(state, *id);
    // Rank candidate blocks by symmetric difference with the request.
    std::vector<bool> want(top.site_count(), false);
    for (int s : sites) {
        if (s < 0 || s >= top.site_count()) throw ConfigError("site " + std::to_string(s) + " outside the lattice");
        want[s] = true;
    }
    std::vector<std::pair<int, int>> ranked;
    for (int id = 0; id < top.node_count(); ++id) {
        if (top.node(id).is_root()) continue;
        auto have = top.sites_of(id);
        int miss = static_cast<int>(sites.size());
        int extra = 0;
        for (int s : have) want[s] ? --miss : ++extra;
        ranked.push_back({miss + extra, id});
    }
    std::sort(ranked.begin(), ranked.end());
    std::ostringstream msg;
    msg << "the requested block of " << sites.size() << " sites is not a subtree of tree '" << top.spec()
        << "'; nearest compatible cuts:";
    for (std::size_t k = 0; k < std::min<std::size_t>(3, ranked.size()); ++k) {
        auto s = top.sites_of(ranked[k].second);
        msg << " node " << ranked[k].second << " {sites " << s.front() << ".." << s.back() << "}";
    }
    throw ConfigError(msg.str());
}

double expect_site(const TreeState& state, int site, PauliAxis axis) {
    TermList t(state.site_count());
    t.add(1.0, {{site, axis}});
    return expectation(state, t);
}

double expect_pair(const TreeState& state, int i, PauliAxis a, int j, PauliAxis b) {
    TermList t(state.site_count());
    t.add(1.0, {{i, a}, {j, b}});
    return expectation(state, t);
}

ed::CollectiveX collective_x(const TreeState& state) {
    const int L = state.site_count();
    TermList one(L);
    for (int i = 0; i < L; ++i) one.add(1.0, {{i, PauliAxis::x}});
    ed::CollectiveX out;
    out.sx = expectation(state, one);
    out.sx2 = L + expectation(state, sx_pair_terms(L));
    return out;
}

}  // namespace spindyn::mlmctdh
