#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spindyn/common.hpp"
#include "spindyn/hamiltonian.hpp"

namespace spindyn::ed {

/// Dense 2^L amplitude vector in the shared bit convention.
struct StateVector {
    int site_count = 0;
    Eigen::VectorXcd amplitudes;

    double norm() const { return amplitudes.norm(); }
};

StateVector prepare_x_polarized(int site_count);

struct KrylovOptions {
    int max_dimension = 30;
    double tolerance = 1e-10;  // per substep, in the 2-norm of the state
    int max_substeps = 1000000;
};

/// Calls observer(t, state) at every grid time, starting with the initial
/// state at t_grid[0] == 0. Lanczos exponentiation with adaptive substeps.
void propagate_each(const StateVector& initial, const TermList& terms, std::span<const double> t_grid,
                    const std::function<void(double, const StateVector&)>& observer,
                    const KrylovOptions& options = {});

std::vector<StateVector> propagate(const StateVector& initial, const TermList& terms,
                                   std::span<const double> t_grid, const KrylovOptions& options = {});

/// One Krylov step exp(-i H dt) psi with adaptive substeps; used by propagate.
Eigen::VectorXcd krylov_evolve(const CompiledTerms& h, const Eigen::VectorXcd& psi, double dt,
                               double t_start, const KrylovOptions& options);

struct ReducedDensity {
    std::vector<int> subsystem;
    /// Row/column index bit k corresponds to subsystem[k].
    Eigen::MatrixXcd matrix;
};

ReducedDensity reduced_density(const StateVector& state, std::span<const int> subsystem);

/// -sum lambda ln lambda over eigenvalues, lambda <= 1e-14 dropped.
double von_neumann_entropy(const ReducedDensity& rho);
double von_neumann_entropy(std::span<const double> eigenvalues);

double expectation(const StateVector& state, const CompiledTerms& op);
double expect_site(const StateVector& state, int site, PauliAxis axis);
double expect_pair(const StateVector& state, int i, PauliAxis a, int j, PauliAxis b);

struct CollectiveX {
    double sx = 0.0;     // <S_x>
    double sx2 = 0.0;    // <S_x^2>
    double dsx() const { return sx2 - sx * sx; }
};

/// Applies S_x directly as an operator: <S_x> and <S_x^2> = |S_x psi|^2.
CollectiveX collective_x(const StateVector& state);

/// Debug dump: int32 L, double t, then 2^L complex doubles (little-endian host order).
void write_snapshot(std::ostream& os, double t, const StateVector& state);

/// Default dense ceiling; larger L is allowed with a warning on stderr.
inline constexpr int default_max_sites = 16;

}  // namespace spindyn::ed
