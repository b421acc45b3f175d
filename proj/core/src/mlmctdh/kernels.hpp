#pragma once

// Leg-wise kernels on node tensors stored row-major with the leg order
// (leg 0, leg 1, ..., own SPF leg last).

#include <algorithm>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spindyn/common.hpp"

namespace spindyn::mlmctdh::detail {

using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

struct Split {
    long pre = 1;
    long d = 1;
    long post = 1;
};

inline Split split_at(std::span<const int> dims, int leg) {
    Split s;
    for (int k = 0; k < leg; ++k) s.pre *= dims[k];
    s.d = dims[leg];
    for (std::size_t k = leg + 1; k < dims.size(); ++k) s.post *= dims[k];
    return s;
}

inline long total_size(std::span<const int> dims) {
    long n = 1;
    for (int d : dims) n *= d;
    return n;
}

/// out (+)= op applied to one leg of in. op may be rectangular (rows = new leg dimension).
inline void apply_leg(const cplx* in, std::span<const int> dims, int leg, const Eigen::MatrixXcd& op, cplx* out,
                      bool accumulate) {
    const Split s = split_at(dims, leg);
    const long dn = op.rows();
    if (s.post == 1) {
        ConstRowMap a(in, s.pre, s.d);
        RowMap b(out, s.pre, dn);
        if (accumulate)
            b.noalias() += a * op.transpose();
        else
            b.noalias() = a * op.transpose();
        return;
    }
    for (long p = 0; p < s.pre; ++p) {
        ConstRowMap a(in + p * s.d * s.post, s.d, s.post);
        RowMap b(out + p * dn * s.post, dn, s.post);
        if (accumulate)
            b.noalias() += op * a;
        else
            b.noalias() = op * a;
    }
}

/// M[i, i'] = sum over every other leg of conj(A[.., i, ..]) * B[.., i', ..].
inline Eigen::MatrixXcd contract_except(const cplx* a, const cplx* b, std::span<const int> dims, int leg) {
    const Split s = split_at(dims, leg);
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(s.d, s.d);
    if (s.post == 1) {
        ConstRowMap am(a, s.pre, s.d), bm(b, s.pre, s.d);
        m.noalias() = am.adjoint() * bm;
        return m;
    }
    for (long p = 0; p < s.pre; ++p) {
        ConstRowMap am(a + p * s.d * s.post, s.d, s.post), bm(b + p * s.d * s.post, s.d, s.post);
        m.noalias() += am.conjugate() * bm.transpose();
    }
    return m;
}

struct Split2 {
    long pre = 1;
    long d1 = 1;
    long mid = 1;
    long d2 = 1;
    long post = 1;
};

inline Split2 split_at(std::span<const int> dims, int l1, int l2) {
    Split2 s;
    for (int k = 0; k < l1; ++k) s.pre *= dims[k];
    s.d1 = dims[l1];
    for (int k = l1 + 1; k < l2; ++k) s.mid *= dims[k];
    s.d2 = dims[l2];
    for (std::size_t k = l2 + 1; k < dims.size(); ++k) s.post *= dims[k];
    return s;
}

/// Rearranges a tensor into a (d1*d2 x rest) matrix, row a1*d2 + a2, for legs l1 < l2.
inline void gather_two(const cplx* in, const Split2& s, RowMat& g) {
    const long rest = s.pre * s.mid * s.post;
    g.resize(s.d1 * s.d2, rest);
    for (long p = 0; p < s.pre; ++p)
        for (long a1 = 0; a1 < s.d1; ++a1)
            for (long m = 0; m < s.mid; ++m)
                for (long a2 = 0; a2 < s.d2; ++a2) {
                    const cplx* src = in + (((p * s.d1 + a1) * s.mid + m) * s.d2 + a2) * s.post;
                    cplx* dst = g.data() + (a1 * s.d2 + a2) * rest + (p * s.mid + m) * s.post;
                    std::copy(src, src + s.post, dst);
                }
}

inline void scatter_add_two(const RowMat& g, const Split2& s, cplx* out) {
    const long rest = s.pre * s.mid * s.post;
    for (long p = 0; p < s.pre; ++p)
        for (long a1 = 0; a1 < s.d1; ++a1)
            for (long m = 0; m < s.mid; ++m)
                for (long a2 = 0; a2 < s.d2; ++a2) {
                    cplx* dst = out + (((p * s.d1 + a1) * s.mid + m) * s.d2 + a2) * s.post;
                    const cplx* src = g.data() + (a1 * s.d2 + a2) * rest + (p * s.mid + m) * s.post;
                    for (long q = 0; q < s.post; ++q) dst[q] += src[q];
                }
}

/// out += op applied jointly to legs l1 < l2; op is (d1*d2 x d1*d2), index a1*d2 + a2.
inline void apply_two_legs(const cplx* in, std::span<const int> dims, int l1, int l2, const Eigen::MatrixXcd& op,
                           cplx* out) {
    const Split2 s = split_at(dims, l1, l2);
    RowMat g, h;
    gather_two(in, s, g);
    h.noalias() = op * g;
    scatter_add_two(h, s, out);
}

/// Two-leg reduced matrix for legs l1 < l2: M[(a1,a2),(b1,b2)] = sum over the
/// remaining legs of conj(A[.., a1, .., a2, ..]) * B[.., b1, .., b2, ..].
inline Eigen::MatrixXcd contract_except_two(const cplx* a, const cplx* b, std::span<const int> dims, int l1, int l2) {
    const Split2 s = split_at(dims, l1, l2);
    RowMat ga, gb;
    gather_two(a, s, ga);
    gather_two(b, s, gb);
    Eigen::MatrixXcd m = ga.conjugate() * gb.transpose();
    return m;
}

inline std::vector<int> with_own(std::vector<int> legs, int own) {
    legs.push_back(own);
    return legs;
}

}  // namespace spindyn::mlmctdh::detail
