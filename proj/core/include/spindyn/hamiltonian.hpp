#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spindyn/common.hpp"
#include "spindyn/lattice.hpp"

namespace spindyn {

// Basis convention shared by every backend: site 0 is the least significant
// bit, |up> is bit 0, |down> is bit 1, and sigma^z|up> = +|up>.

enum class PauliAxis : std::uint8_t { x = 0, y = 1, z = 2 };

char axis_name(PauliAxis axis);

/// 2x2 Pauli matrix in the (up, down) basis.
Eigen::Matrix2cd pauli_matrix(PauliAxis axis);

struct PauliFactor {
    int site = 0;
    PauliAxis axis = PauliAxis::z;
};

/// coefficient * product of Pauli factors on distinct sites (one or two factors).
struct Term {
    double coefficient = 0.0;
    std::vector<PauliFactor> factors;
};

class TermList {
public:
    TermList() = default;
    explicit TermList(int site_count) : site_count_(site_count) {}

    int site_count() const { return site_count_; }
    const std::vector<Term>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }

    /// Adds a term; zero coefficients are dropped. Throws on repeated or out-of-range sites.
    void add(double coefficient, std::vector<PauliFactor> factors);

private:
    int site_count_ = 0;
    std::vector<Term> terms_;
};

std::ostream& operator<<(std::ostream& os, const TermList& terms);

/// H = -sum_{i<j} sum_b J^b_ij sigma^b_i sigma^b_j, one term per nonzero coupling.
TermList heisenberg_terms(const CouplingMatrix& couplings);

/// Collective moment operator sum_{i != j} sigma^x_i sigma^x_j as a term list
/// (coefficient 2 per unordered pair).
TermList sx_pair_terms(int site_count);

/// Matrix-free action of a term list on dense state vectors. Terms are grouped
/// by their bit-flip mask; the diagonal group is tabulated once.
class CompiledTerms {
public:
    explicit CompiledTerms(const TermList& terms);

    int site_count() const { return site_count_; }
    std::size_t dimension() const { return std::size_t{1} << site_count_; }

    /// out = H * in. Throws ConfigError on dimension mismatch.
    void apply(std::span<const cplx> in, std::span<cplx> out) const;
    Eigen::VectorXcd apply(const Eigen::VectorXcd& in) const;

private:
    struct Piece {
        cplx coefficient;  // includes i^(number of Y factors)
        std::uint64_t sign_mask;
    };
    struct FlipGroup {
        std::uint64_t flip_mask;
        std::vector<Piece> pieces;
    };

    int site_count_;
    std::vector<double> diagonal_;
    std::vector<FlipGroup> groups_;
};

Eigen::VectorXcd apply_terms(const TermList& terms, const Eigen::VectorXcd& state);

}  // namespace spindyn
