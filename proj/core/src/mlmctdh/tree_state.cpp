#include "spindyn/mlmctdh/tree_state.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

#include "mlmctdh/kernels.hpp"

namespace spindyn::mlmctdh {

namespace {

// Keeps `first` as column 0 and fills the remaining columns from the canonical basis.
NodeTensor complete_basis(const Eigen::VectorXcd& first, long dim, int count) {
    NodeTensor phi = NodeTensor::Zero(dim, count);
    phi.col(0) = first.normalized();
    int filled = 1;
    for (long e = 0; e < dim && filled < count; ++e) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Unit(dim, e);
        for (int pass = 0; pass < 2; ++pass)
            for (int k = 0; k < filled; ++k) v -= phi.col(k) * phi.col(k).dot(v);
        const double n = v.norm();
        if (n > 1e-8) phi.col(filled++) = v / n;
    }
    return phi;
}

NodeTensor random_isometry(long dim, int count, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXcd raw(dim, count);
    for (long i = 0; i < dim; ++i)
        for (int j = 0; j < count; ++j) raw(i, j) = cplx(g(rng), g(rng));
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(raw);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(dim, count);
    return q;
}

}  // namespace

TreeState build_initial_state(const TreeTopology& topology) {
    TreeState state{topology, std::vector<NodeTensor>(topology.node_count()), 0.0};
    for (int id = 0; id < topology.node_count(); ++id) {
        const TreeNode& n = topology.node(id);
        const long dim = topology.configuration_dimension(id);
        Eigen::VectorXcd first;
        if (n.is_leaf())
            first = Eigen::VectorXcd::Constant(dim, 1.0);  // every spin in (|up> + |down>)/sqrt 2
        else
            first = Eigen::VectorXcd::Unit(dim, 0);  // all children in their first SPF
        state.tensors[id] = complete_basis(first, dim, n.spf_count);
    }
    return state;
}

TreeState random_state(const TreeTopology& topology, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TreeState state{topology, std::vector<NodeTensor>(topology.node_count()), 0.0};
    for (int id = 0; id < topology.node_count(); ++id)
        state.tensors[id] = random_isometry(topology.configuration_dimension(id), topology.node(id).spf_count, rng);
    return state;
}

double orthonormality_residual(const TreeState& state, int node) {
    const NodeTensor& phi = state.tensors.at(node);
    Eigen::MatrixXcd s = phi.adjoint() * phi;
    s.diagonal().array() -= 1.0;
    return s.cwiseAbs().maxCoeff();
}

double orthonormality_residual(const TreeState& state) {
    double worst = 0.0;
    for (int id = 0; id < state.topology.node_count(); ++id)
        if (!state.topology.node(id).is_root()) worst = std::max(worst, orthonormality_residual(state, id));
    return worst;
}

double norm_squared(const TreeState& state) {
    // Bottom-up overlap matrices make this exact even for non-orthonormal SPFs.
    const TreeTopology& top = state.topology;
    std::vector<Eigen::MatrixXcd> overlap(top.node_count());
    for (int id : top.post_order()) {
        const TreeNode& n = top.node(id);
        const NodeTensor& phi = state.tensors[id];
        if (n.is_leaf()) {
            overlap[id] = phi.adjoint() * phi;
            continue;
        }
        auto dims = detail::with_own(top.leg_dims(id), n.spf_count);
        NodeTensor work = phi, next(phi.rows(), phi.cols());
        for (std::size_t c = 0; c < n.children.size(); ++c) {
            detail::apply_leg(work.data(), dims, static_cast<int>(c), overlap[n.children[c]], next.data(), false);
            work.swap(next);
        }
        overlap[id] = phi.adjoint() * work;
    }
    return overlap[top.root()](0, 0).real();
}

ed::StateVector to_statevector(const TreeState& state, int max_sites) {
    const TreeTopology& top = state.topology;
    const int L = top.site_count();
    if (L > max_sites)
        throw ConfigError("dense reconstruction of " + std::to_string(L) + " spins exceeds the guard of " +
                          std::to_string(max_sites));
    // dense[id]: (2^slots x m) with row bit k belonging to slot first_slot + k.
    std::vector<Eigen::MatrixXcd> dense(top.node_count());
    for (int id : top.post_order()) {
        const TreeNode& n = top.node(id);
        const NodeTensor& phi = state.tensors[id];
        const int legs = n.leg_count();
        std::vector<int> widths;  // bits contributed by each leg
        NodeTensor expanded = phi;
        if (n.is_leaf()) {
            widths.assign(legs, 1);
        } else {
            auto dims = detail::with_own(top.leg_dims(id), n.spf_count);
            for (int c = 0; c < legs; ++c) {
                const Eigen::MatrixXcd& b = dense[n.children[c]];
                auto out_dims = dims;
                out_dims[c] = static_cast<int>(b.rows());
                NodeTensor next(detail::total_size(out_dims) / n.spf_count, n.spf_count);
                detail::apply_leg(expanded.data(), dims, c, b, next.data(), false);
                expanded.swap(next);
                dims = out_dims;
                widths.push_back(top.node(n.children[c]).slot_count);
            }
        }
        // Row-major rows put leg 0 most significant; re-index so leg 0 occupies the low bits.
        const long rows = expanded.rows();
        Eigen::MatrixXcd out(rows, n.spf_count);
        for (long r = 0; r < rows; ++r) {
            long rest = r, local = 0;
            int shift = n.slot_count;
            for (int c = legs - 1; c >= 0; --c) {
                const long base = 1L << widths[c];
                shift -= widths[c];
                local |= (rest % base) << shift;
                rest /= base;
            }
            out.row(local) = expanded.row(r);
        }
        dense[id] = std::move(out);
    }
    ed::StateVector sv{L, Eigen::VectorXcd::Zero(1L << L)};
    const Eigen::MatrixXcd& root = dense[top.root()];
    for (long local = 0; local < root.rows(); ++local) {
        long index = 0;
        for (int slot = 0; slot < L; ++slot)
            if ((local >> slot) & 1) index |= 1L << top.site_of_slot(slot);
        sv.amplitudes[index] = root(local, 0);
    }
    return sv;
}

double reorthonormalize(TreeState& state) {
    const TreeTopology& top = state.topology;
    double worst = 0.0;
    for (int id : top.post_order()) {
        const TreeNode& n = top.node(id);
        if (n.is_root()) continue;
        NodeTensor& phi = state.tensors[id];
        Eigen::MatrixXcd s = phi.adjoint() * phi;
        Eigen::MatrixXcd dev = s;
        dev.diagonal().array() -= 1.0;
        worst = std::max(worst, dev.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(s);
        const Eigen::VectorXd lam = es.eigenvalues();
        if (lam.minCoeff() <= 0.0) throw NumericalError("SPF basis at node " + std::to_string(id) + " became singular");
        const Eigen::MatrixXcd& v = es.eigenvectors();
        Eigen::MatrixXcd inv_sqrt = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.adjoint();
        Eigen::MatrixXcd sqrt_s = v * lam.cwiseSqrt().asDiagonal() * v.adjoint();
        phi = phi * inv_sqrt;
        // Parent absorbs S^{1/2} on the leg that carries this node.
        NodeTensor& parent = state.tensors[n.parent];
        auto dims = detail::with_own(top.leg_dims(n.parent), top.node(n.parent).spf_count);
        NodeTensor next(parent.rows(), parent.cols());
        detail::apply_leg(parent.data(), dims, n.leg_in_parent, sqrt_s, next.data(), false);
        parent.swap(next);
    }
    return worst;
}

namespace {

constexpr char magic[8] = {'S', 'P', 'D', 'T', 'R', 'E', 'E', '\0'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("truncated tree checkpoint");
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const TreeState& state) {
    os.write(magic, sizeof magic);
    put(os, checkpoint_version);
    const std::string& spec = state.topology.spec();
    put(os, static_cast<std::uint32_t>(spec.size()));
    os.write(spec.data(), static_cast<std::streamsize>(spec.size()));
    put(os, static_cast<std::uint32_t>(state.site_count()));
    for (int s : state.topology.slot_to_site()) put(os, static_cast<std::int32_t>(s));
    put(os, state.time);
    put(os, static_cast<std::uint32_t>(state.tensors.size()));
    for (const NodeTensor& t : state.tensors) {
        put(os, static_cast<std::uint64_t>(t.rows()));
        put(os, static_cast<std::uint64_t>(t.cols()));
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(cplx)));
    }
    if (!os) throw NumericalError("failed to write tree checkpoint");
}

TreeState read_checkpoint(std::istream& is) {
    char head[sizeof magic];
    is.read(head, sizeof head);
    if (!is || std::memcmp(head, magic, sizeof magic) != 0) throw ConfigError("not a tree checkpoint");
    const auto version = get<std::uint32_t>(is);
    if (version != checkpoint_version)
        throw ConfigError("unsupported tree checkpoint version " + std::to_string(version));
    std::string spec(get<std::uint32_t>(is), '\0');
    is.read(spec.data(), static_cast<std::streamsize>(spec.size()));
    TreeState state;
    state.topology = parse_tree(spec);
    const auto L = get<std::uint32_t>(is);
    if (static_cast<int>(L) != state.topology.site_count()) throw ConfigError("checkpoint site count mismatch");
    std::vector<int> order(L);
    for (auto& s : order) s = get<std::int32_t>(is);
    state.topology.set_site_order(std::move(order));
    state.time = get<double>(is);
    const auto count = get<std::uint32_t>(is);
    if (static_cast<int>(count) != state.topology.node_count()) throw ConfigError("checkpoint node count mismatch");
    state.tensors.resize(count);
    for (std::uint32_t id = 0; id < count; ++id) {
        const auto rows = get<std::uint64_t>(is);
        const auto cols = get<std::uint64_t>(is);
        if (static_cast<long>(rows) != state.topology.configuration_dimension(id) ||
            static_cast<int>(cols) != state.topology.node(id).spf_count)
            throw ConfigError("checkpoint tensor shape does not match its tree");
        state.tensors[id].resize(rows, cols);
        is.read(reinterpret_cast<char*>(state.tensors[id].data()),
                static_cast<std::streamsize>(rows * cols * sizeof(cplx)));
        if (!is) throw ConfigError("truncated tree checkpoint");
    }
    return state;
}

}  // namespace spindyn::mlmctdh
