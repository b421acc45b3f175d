#include "spindyn/mlmctdh/tree_operator.hpp"

#include <cmath>
#include <map>

#include "mlmctdh/kernels.hpp"

namespace spindyn::mlmctdh {

using detail::apply_leg;
using detail::contract_except;

namespace {

constexpr double rank_tolerance = 1e-13;

std::vector<int> join(const std::vector<std::vector<int>>& parts) {
    std::vector<int> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd k(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

// Orthonormal basis of the column space of m, singular values above cutoff.
Eigen::MatrixXd range_basis(const Eigen::MatrixXd& m, double cutoff) {
    if (m.rows() == 0 || m.cols() == 0) return Eigen::MatrixXd(m.rows(), 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    int r = 0;
    while (r < svd.singularValues().size() && svd.singularValues()[r] > cutoff) ++r;
    return svd.matrixU().leftCols(r);
}

}  // namespace

struct TreeOperator::Impl {
    struct Pair {
        int leg_a = 0;
        int leg_b = 0;
        Eigen::MatrixXd left;   // r(a) x rank
        Eigen::MatrixXd right;  // r(b) x rank
        bool dense = false;     // apply as one (d_a d_b)^2 operator instead of rank-many leg pairs
    };
    struct SiblingCoupling {
        int leg = 0;          // leg of the parent
        Eigen::MatrixXd map;  // r(sibling) x r(node)
    };
    struct NodeData {
        std::vector<int> units;  // unit id per leg
        std::vector<int> dims;   // leg dims plus own SPF count
        std::vector<Eigen::MatrixXd> expand;  // per leg: r(leg) x r(node)
        std::vector<Pair> pairs;
        Eigen::MatrixXd from_parent;  // r(parent) x r(node)
        std::vector<SiblingCoupling> siblings;
        /// Children's sibling mean fields from two-leg densities of this node's
        /// coefficients rather than one leg application per channel.
        bool pair_density = false;
    };

    TreeTopology topology;
    int node_count = 0;
    // Units: tree nodes 0..N-1, then physical sites N..N+L-1.
    std::vector<std::vector<int>> keys;  // key = 3 * site + axis
    std::vector<Eigen::MatrixXd> basis;  // per unit: |keys| x r
    std::vector<bool> has_inner;
    std::vector<Eigen::Matrix2cd> field;  // per site
    std::vector<NodeData> nodes;

    int rank(int unit) const { return static_cast<int>(basis[unit].cols()); }
    int site_unit(int site) const { return node_count + site; }

    Impl(const TreeTopology& top, const TermList& terms);

    struct Sweep {
        std::vector<std::vector<Eigen::MatrixXcd>> chan;  // per unit, r matrices
        std::vector<Eigen::MatrixXcd> inner;              // per unit
        std::vector<NodeTensor> h_phi;                    // per node: inner operator applied
        std::vector<std::vector<NodeTensor>> z;           // per node: channel operators applied
    };

    Eigen::MatrixXcd combine(const Sweep& s, int unit, const Eigen::Ref<const Eigen::VectorXd>& coeff) const {
        const auto& ch = s.chan[unit];
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(ch.front().rows(), ch.front().cols());
        for (std::size_t k = 0; k < ch.size(); ++k)
            if (coeff[k] != 0.0) m += coeff[k] * ch[k];
        return m;
    }

    void apply_inner(const Sweep& s, int id, const NodeTensor& x, NodeTensor& out) const;
    void apply_channel(const Sweep& s, int id, int channel, const NodeTensor& x, NodeTensor& out) const;
    void start_sweep(Sweep& s) const;
    void node_up(const NodeTensor& phi, int id, Sweep& s, bool want_z) const;
    void upward(const std::vector<NodeTensor>& tensors, Sweep& s, bool want_z) const;
};

TreeOperator::Impl::Impl(const TreeTopology& top, const TermList& terms) : topology(top) {
    const int L = top.site_count();
    if (terms.site_count() != L)
        throw ConfigError("operator acts on " + std::to_string(terms.site_count()) + " sites but the tree has " +
                          std::to_string(L));
    node_count = top.node_count();
    const int units = node_count + L;

    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(3 * L, 3 * L);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(3 * L);
    for (const Term& t : terms.terms()) {
        if (t.factors.size() == 1) {
            const auto& f = t.factors[0];
            h[3 * f.site + static_cast<int>(f.axis)] += t.coefficient;
        } else if (t.factors.size() == 2) {
            const int a = 3 * t.factors[0].site + static_cast<int>(t.factors[0].axis);
            const int b = 3 * t.factors[1].site + static_cast<int>(t.factors[1].axis);
            k(a, b) += t.coefficient;
            k(b, a) += t.coefficient;
        } else {
            throw ConfigError("tree operators support one- and two-site terms only");
        }
    }
    const double cutoff = rank_tolerance * std::max(k.norm(), 1e-300);

    keys.assign(units, {});
    basis.assign(units, Eigen::MatrixXd());
    has_inner.assign(units, false);
    field.assign(L, Eigen::Matrix2cd::Zero());
    for (int site = 0; site < L; ++site) {
        const int u = site_unit(site);
        for (int ax = 0; ax < 3; ++ax) {
            const int key = 3 * site + ax;
            if (k.row(key).cwiseAbs().maxCoeff() > 0.0) keys[u].push_back(key);
            field[site] += h[key] * pauli_matrix(static_cast<PauliAxis>(ax));
        }
        basis[u] = Eigen::MatrixXd::Identity(keys[u].size(), keys[u].size());
        has_inner[u] = h.segment(3 * site, 3).cwiseAbs().maxCoeff() > 0.0;
    }

    std::vector<bool> inside(3 * L);
    nodes.resize(node_count);
    for (int id : top.post_order()) {
        const TreeNode& n = top.node(id);
        NodeData& nd = nodes[id];
        if (n.is_leaf())
            for (int slot : n.slots) nd.units.push_back(site_unit(top.site_of_slot(slot)));
        else
            nd.units = n.children;
        nd.dims = detail::with_own(top.leg_dims(id), n.spf_count);

        std::vector<std::vector<int>> leg_keys;
        for (int u : nd.units) leg_keys.push_back(keys[u]);
        keys[id] = join(leg_keys);

        // Channel basis: range of the coupling block from this subtree to the rest.
        std::fill(inside.begin(), inside.end(), false);
        for (int key : keys[id]) inside[key] = true;
        std::vector<int> outside;
        for (int u = node_count; u < units; ++u)
            for (int key : keys[u])
                if (!inside[key]) outside.push_back(key);
        if (n.is_root())
            basis[id] = Eigen::MatrixXd(keys[id].size(), 0);
        else
            basis[id] = range_basis(k(keys[id], outside), cutoff);

        bool inner = false;
        for (int u : nd.units) inner = inner || has_inner[u];

        int offset = 0;
        std::vector<int> offsets;
        for (std::size_t c = 0; c < nd.units.size(); ++c) {
            offsets.push_back(offset);
            offset += static_cast<int>(leg_keys[c].size());
        }
        for (std::size_t c = 0; c < nd.units.size(); ++c) {
            const int u = nd.units[c];
            nd.expand.push_back(basis[u].transpose() *
                                basis[id].middleRows(offsets[c], leg_keys[c].size()));
        }
        for (std::size_t a = 0; a < nd.units.size(); ++a) {
            for (std::size_t b = a + 1; b < nd.units.size(); ++b) {
                const int ua = nd.units[a], ub = nd.units[b];
                if (rank(ua) == 0 || rank(ub) == 0) continue;
                Eigen::MatrixXd x = basis[ua].transpose() * k(keys[ua], keys[ub]) * basis[ub];
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
                int r = 0;
                while (r < svd.singularValues().size() && svd.singularValues()[r] > cutoff) ++r;
                if (r == 0) continue;
                Pair p;
                p.leg_a = static_cast<int>(a);
                p.leg_b = static_cast<int>(b);
                p.left = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
                p.right = svd.matrixV().leftCols(r);
                const long da = nd.dims[a], db = nd.dims[b];
                p.dense = static_cast<long>(r) * (da + db) > da * db;
                nd.pairs.push_back(std::move(p));
                inner = true;
            }
        }
        has_inner[id] = inner;
    }

    // Couplings of each node to its siblings and through its parent's boundary.
    for (int id = 0; id < node_count; ++id) {
        const TreeNode& n = top.node(id);
        if (n.is_root()) continue;
        NodeData& nd = nodes[id];
        const int q = n.parent;
        const TreeNode& pn = top.node(q);
        if (!pn.is_root()) {
            int offset = 0;
            for (int c = 0; c < n.leg_in_parent; ++c) offset += static_cast<int>(keys[nodes[q].units[c]].size());
            nd.from_parent = basis[q].middleRows(offset, keys[id].size()).transpose() * basis[id];
        } else {
            nd.from_parent = Eigen::MatrixXd(0, rank(id));
        }
        for (int s = 0; s < pn.leg_count(); ++s) {
            if (s == n.leg_in_parent) continue;
            const int us = nodes[q].units[s];
            if (rank(us) == 0 || rank(id) == 0) continue;
            Eigen::MatrixXd map = basis[us].transpose() * k(keys[us], keys[id]) * basis[id];
            if (map.cwiseAbs().maxCoeff() <= cutoff) continue;
            nd.siblings.push_back({s, std::move(map)});
        }
    }
    for (int q = 0; q < node_count; ++q) {
        const TreeNode& qn = top.node(q);
        if (qn.is_leaf()) continue;
        const double size = static_cast<double>(top.configuration_dimension(q)) * qn.spf_count;
        double direct = 0.0, paired = 0.0;
        std::vector<std::vector<bool>> coupled(qn.children.size(), std::vector<bool>(qn.children.size(), false));
        for (int p : qn.children) {
            const NodeData& nd = nodes[p];
            const int l = top.node(p).leg_in_parent;
            for (const auto& sib : nd.siblings) {
                direct += rank(p) * size * nodes[q].dims[sib.leg];
                coupled[std::min(l, sib.leg)][std::max(l, sib.leg)] = true;
            }
            if (!nd.siblings.empty()) direct += rank(p) * size * nodes[q].dims[l];
        }
        for (std::size_t a = 0; a < coupled.size(); ++a)
            for (std::size_t b = a + 1; b < coupled.size(); ++b)
                if (coupled[a][b]) paired += size * nodes[q].dims[a] * nodes[q].dims[b];
        nodes[q].pair_density = paired < direct;
    }
}

void TreeOperator::Impl::apply_inner(const Sweep& s, int id, const NodeTensor& x, NodeTensor& out) const {
    const NodeData& nd = nodes[id];
    auto dims = nd.dims;
    dims.back() = static_cast<int>(x.cols());
    out.setZero(x.rows(), x.cols());
    for (std::size_t c = 0; c < nd.units.size(); ++c) {
        const int u = nd.units[c];
        if (has_inner[u]) apply_leg(x.data(), dims, static_cast<int>(c), s.inner[u], out.data(), true);
    }
    NodeTensor tmp(x.rows(), x.cols());
    for (const Pair& p : nd.pairs) {
        const int ua = nd.units[p.leg_a], ub = nd.units[p.leg_b];
        if (p.dense) {
            const long da = dims[p.leg_a], db = dims[p.leg_b];
            Eigen::MatrixXcd op = Eigen::MatrixXcd::Zero(da * db, da * db);
            for (int r = 0; r < p.left.cols(); ++r)
                op += kron(combine(s, ua, p.left.col(r)), combine(s, ub, p.right.col(r)));
            detail::apply_two_legs(x.data(), dims, p.leg_a, p.leg_b, op, out.data());
            continue;
        }
        for (int r = 0; r < p.left.cols(); ++r) {
            apply_leg(x.data(), dims, p.leg_b, combine(s, ub, p.right.col(r)), tmp.data(), false);
            apply_leg(tmp.data(), dims, p.leg_a, combine(s, ua, p.left.col(r)), out.data(), true);
        }
    }
}

void TreeOperator::Impl::apply_channel(const Sweep& s, int id, int channel, const NodeTensor& x,
                                       NodeTensor& out) const {
    const NodeData& nd = nodes[id];
    auto dims = nd.dims;
    dims.back() = static_cast<int>(x.cols());
    out.setZero(x.rows(), x.cols());
    for (std::size_t c = 0; c < nd.units.size(); ++c) {
        const int u = nd.units[c];
        if (rank(u) == 0) continue;
        const auto col = nd.expand[c].col(channel);
        if (col.cwiseAbs().maxCoeff() == 0.0) continue;
        apply_leg(x.data(), dims, static_cast<int>(c), combine(s, u, col), out.data(), true);
    }
}

void TreeOperator::Impl::start_sweep(Sweep& s) const {
    const int L = topology.site_count();
    s.chan.assign(node_count + L, {});
    s.inner.assign(node_count + L, Eigen::MatrixXcd());
    s.h_phi.assign(node_count, NodeTensor());
    s.z.assign(node_count, {});
    for (int site = 0; site < L; ++site) {
        const int u = site_unit(site);
        for (int key : keys[u]) s.chan[u].push_back(pauli_matrix(static_cast<PauliAxis>(key % 3)));
        s.inner[u] = field[site];
    }
}

void TreeOperator::Impl::node_up(const NodeTensor& phi, int id, Sweep& s, bool want_z) const {
    if (has_inner[id]) {
        apply_inner(s, id, phi, s.h_phi[id]);
        s.inner[id] = phi.adjoint() * s.h_phi[id];
    }
    const int r = rank(id);
    if (r == 0) return;
    std::vector<NodeTensor> z(r);
    s.chan[id].resize(r);
    for (int kk = 0; kk < r; ++kk) {
        apply_channel(s, id, kk, phi, z[kk]);
        s.chan[id][kk] = phi.adjoint() * z[kk];
    }
    if (want_z) s.z[id] = std::move(z);
}

void TreeOperator::Impl::upward(const std::vector<NodeTensor>& tensors, Sweep& s, bool want_z) const {
    start_sweep(s);
    for (int id : topology.post_order()) node_up(tensors[id], id, s, want_z);
}

TreeOperator::TreeOperator(const TreeTopology& topology, const TermList& terms)
    : impl_(std::make_unique<Impl>(topology, terms)) {}
TreeOperator::~TreeOperator() = default;
TreeOperator::TreeOperator(TreeOperator&&) noexcept = default;
TreeOperator& TreeOperator::operator=(TreeOperator&&) noexcept = default;

int TreeOperator::channel_count(int node) const { return impl_->rank(node); }

double TreeOperator::expectation(const TreeState& state) const {
    Impl::Sweep s;
    impl_->upward(state.tensors, s, false);
    const int root = state.topology.root();
    const NodeTensor& a = state.tensors[root];
    const double n2 = a.squaredNorm();
    if (!impl_->has_inner[root]) return 0.0;
    return (a.adjoint() * s.h_phi[root])(0, 0).real() / n2;
}

void TreeOperator::time_derivative(const TreeState& state, std::vector<NodeTensor>& out, double regularization,
                                   DerivativeDiagnostics* diagnostics) const {
    time_derivative(state.tensors, out, regularization, diagnostics);
}

void TreeOperator::time_derivative(const std::vector<NodeTensor>& tensors, std::vector<NodeTensor>& out,
                                   double regularization, DerivativeDiagnostics* diagnostics) const {
    const Impl& im = *impl_;
    const TreeTopology& top = im.topology;
    Impl::Sweep s;
    im.upward(tensors, s, true);
    out.resize(top.node_count());

    const cplx minus_i(0.0, -1.0);
    const int root = top.root();
    if (im.has_inner[root])
        out[root] = minus_i * s.h_phi[root];
    else
        out[root] = NodeTensor::Zero(tensors[root].rows(), tensors[root].cols());

    std::vector<Eigen::MatrixXcd> rho(top.node_count());
    std::vector<std::vector<Eigen::MatrixXcd>> gamma(top.node_count());
    DerivativeDiagnostics diag;

    int current_parent = -1;
    NodeTensor x;
    std::map<std::pair<int, int>, Eigen::MatrixXcd> pair_rho;
    for (int id = 0; id < top.node_count(); ++id) {
        const TreeNode& n = top.node(id);
        if (n.is_root()) continue;
        const Impl::NodeData& nd = im.nodes[id];
        const int q = n.parent, leg = n.leg_in_parent;
        const auto& qdims = im.nodes[q].dims;
        const NodeTensor& aq = tensors[q];
        const int own = static_cast<int>(qdims.size()) - 1;

        if (q != current_parent) {
            current_parent = q;
            pair_rho.clear();
            if (top.node(q).is_root()) {
                x = aq;
            } else {
                x.resize(aq.rows(), aq.cols());
                apply_leg(aq.data(), qdims, own, rho[q], x.data(), false);
            }
        }
        rho[id] = contract_except(aq.data(), x.data(), qdims, leg);

        const int r = im.rank(id);
        gamma[id].assign(r, Eigen::MatrixXcd::Zero(n.spf_count, n.spf_count));
        const bool paired = im.nodes[q].pair_density;
        NodeTensor b(aq.rows(), aq.cols());
        for (int kk = 0; kk < r; ++kk) {
            b.setZero();
            bool any = false;
            if (nd.from_parent.rows() > 0) {
                Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(aq.cols(), aq.cols());
                for (int kp = 0; kp < nd.from_parent.rows(); ++kp)
                    if (nd.from_parent(kp, kk) != 0.0) g += nd.from_parent(kp, kk) * gamma[q][kp];
                apply_leg(aq.data(), qdims, own, g, b.data(), true);
                any = true;
            }
            if (!paired) {
                for (const auto& sib : nd.siblings) {
                    const int us = im.nodes[q].units[sib.leg];
                    apply_leg(x.data(), qdims, sib.leg, im.combine(s, us, sib.map.col(kk)), b.data(), true);
                    any = true;
                }
            }
            if (any) gamma[id][kk] = contract_except(aq.data(), b.data(), qdims, leg);
        }
        if (paired) {
            for (const auto& sib : nd.siblings) {
                const int lo = std::min(leg, sib.leg), hi = std::max(leg, sib.leg);
                auto it = pair_rho.find({lo, hi});
                if (it == pair_rho.end())
                    it = pair_rho.emplace(std::make_pair(lo, hi), detail::contract_except_two(aq.data(), x.data(), qdims, lo, hi)).first;
                const Eigen::MatrixXcd& rr = it->second;
                const int us = im.nodes[q].units[sib.leg];
                const long dl = qdims[leg], ds = qdims[sib.leg];
                for (int kk = 0; kk < r; ++kk) {
                    const Eigen::MatrixXcd m = im.combine(s, us, sib.map.col(kk));
                    Eigen::MatrixXcd& g = gamma[id][kk];
                    // rr rows/cols index (lo leg, hi leg); sum out the sibling leg against m.
                    for (long xs = 0; xs < ds; ++xs)
                        for (long ys = 0; ys < ds; ++ys) {
                            const cplx w = m(xs, ys);
                            if (w == 0.0) continue;
                            if (leg < sib.leg)
                                g += w * rr(Eigen::seqN(xs, dl, ds), Eigen::seqN(ys, dl, ds));
                            else
                                g += w * rr.block(xs * dl, ys * dl, dl, dl);
                        }
                }
            }
        }

        // Regularized inverse density.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho[id]);
        Eigen::VectorXd lam = es.eigenvalues();
        const double trace = lam.sum();
        diag.min_population = std::min(diag.min_population, lam.minCoeff() / trace);
        if (lam.minCoeff() < regularization) ++diag.regularized_nodes;
        Eigen::VectorXd inv(lam.size());
        for (int j = 0; j < lam.size(); ++j)
            inv[j] = 1.0 / (lam[j] + regularization * std::exp(-lam[j] / regularization));
        const Eigen::MatrixXcd rho_inv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().adjoint();

        const NodeTensor& phi = tensors[id];
        NodeTensor y = im.has_inner[id] ? s.h_phi[id] : NodeTensor::Zero(phi.rows(), phi.cols());
        for (int kk = 0; kk < r; ++kk) y.noalias() += s.z[id][kk] * (rho_inv * gamma[id][kk]).transpose();
        Eigen::MatrixXcd overlap = phi.adjoint() * y;
        y.noalias() -= phi * overlap;
        out[id] = minus_i * y;
    }
    if (diagnostics) *diagnostics = diag;
}

void TreeOperator::seed_unoccupied(TreeState& state) const {
    const Impl& im = *impl_;
    const TreeTopology& top = state.topology;
    // Only SPF 0 may carry weight: every parent coefficient must vanish off the
    // all-first-SPF slice of each leg.
    for (int id = 0; id < top.node_count(); ++id) {
        const TreeNode& n = top.node(id);
        if (n.is_leaf()) continue;
        const auto dims = im.nodes[id].dims;
        const NodeTensor& a = state.tensors[id];
        for (long row = 0; row < a.rows(); ++row) {
            long rest = row;
            bool first = true;
            for (int c = static_cast<int>(n.children.size()) - 1; c >= 0; --c) {
                first = first && rest % dims[c] == 0;
                rest /= dims[c];
            }
            if (!first && (n.is_root() ? a.row(row).norm() : a.row(row).head(1).norm()) > 0.0)
                throw ConfigError("unoccupied SPFs can only be seeded on a product state");
        }
    }

    Impl::Sweep s;
    im.start_sweep(s);
    for (int id : top.post_order()) {
        NodeTensor& phi = state.tensors[id];
        const int m = static_cast<int>(phi.cols());
        if (!top.node(id).is_root() && m > 1) {
            const long dim = phi.rows();
            NodeTensor basis = NodeTensor::Zero(dim, m);
            basis.col(0) = phi.col(0);
            int filled = 1;
            auto accept = [&](Eigen::VectorXcd v) {
                if (filled >= m) return false;
                const double scale = v.norm();
                for (int pass = 0; pass < 2; ++pass) v -= basis.leftCols(filled) * (basis.leftCols(filled).adjoint() * v);
                if (v.norm() <= 1e-10 * std::max(scale, 1e-300)) return false;
                basis.col(filled++) = v.normalized();
                return true;
            };
            // Block Krylov sequence: channel operators and the inner operator applied
            // to the newest vectors, in a fixed order.
            int frontier_begin = 0, frontier_end = 1;
            while (filled < m && frontier_begin < frontier_end) {
                NodeTensor frontier = basis.middleCols(frontier_begin, frontier_end - frontier_begin);
                NodeTensor image;
                for (int kk = 0; kk < im.rank(id) && filled < m; ++kk) {
                    im.apply_channel(s, id, kk, frontier, image);
                    for (long c = 0; c < image.cols(); ++c) accept(image.col(c));
                }
                if (im.has_inner[id] && filled < m) {
                    im.apply_inner(s, id, frontier, image);
                    for (long c = 0; c < image.cols(); ++c) accept(image.col(c));
                }
                frontier_begin = frontier_end;
                frontier_end = filled;
            }
            for (long e = 0; e < dim && filled < m; ++e) accept(Eigen::VectorXcd::Unit(dim, e));
            phi = basis;
        }
        im.node_up(phi, id, s, false);
    }
}

double expectation(const TreeState& state, const TermList& terms) {
    return TreeOperator(state.topology, terms).expectation(state);
}

}  // namespace spindyn::mlmctdh
