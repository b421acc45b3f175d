#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace spindyn {

enum class Geometry { chain1d, square2d };

/// Open-boundary lattice. Sites of a square lattice are numbered row-major,
/// site = y * Lx + x.
class LatticeSpec {
public:
    LatticeSpec(Geometry geometry, int lx, int ly);

    Geometry geometry() const { return geometry_; }
    int lx() const { return lx_; }
    int ly() const { return ly_; }
    int site_count() const { return lx_ * ly_; }

    std::array<int, 2> coords(int site) const;
    /// Euclidean distance on the unit grid.
    double distance(int i, int j) const;
    /// Lattice-graph adjacency (unit distance).
    bool adjacent(int i, int j) const;

private:
    Geometry geometry_;
    int lx_;
    int ly_;
};

LatticeSpec build_lattice(Geometry geometry, std::span<const int> extents);

enum class CouplingMode { powerlaw, nearest_neighbor, disordered_powerlaw };

std::string to_string(CouplingMode mode);
CouplingMode parse_coupling_mode(const std::string& text);
std::string to_string(Geometry geometry);
Geometry parse_geometry(const std::string& text);

/// Per-axis symmetric coupling matrices J^x, J^y, J^z with zero diagonal.
struct CouplingMatrix {
    std::array<Eigen::MatrixXd, 3> axes;
    double alpha = 0.0;
    CouplingMode mode = CouplingMode::powerlaw;
    std::optional<std::uint64_t> seed;

    int site_count() const { return static_cast<int>(axes[2].rows()); }
    const Eigen::MatrixXd& x() const { return axes[0]; }
    const Eigen::MatrixXd& y() const { return axes[1]; }
    const Eigen::MatrixXd& z() const { return axes[2]; }
    /// True when J^x and J^y vanish identically.
    bool is_ising() const;
};

CouplingMatrix build_couplings(const LatticeSpec& lattice, double alpha,
                               const std::array<double, 3>& J, CouplingMode mode);

/// Uniform amplitudes u_ij in [-1, 1], one per unordered pair, multiplied by
/// the power-law decay: J^z_ij = u_ij / r_ij^alpha.
CouplingMatrix sample_disorder(const LatticeSpec& lattice, double alpha, std::uint64_t seed);

/// J^z_ij = u_ij / r_ij^alpha from a symmetric amplitude matrix u (diagonal ignored).
CouplingMatrix compose_disorder(const LatticeSpec& lattice, double alpha,
                                const Eigen::MatrixXd& amplitudes,
                                std::optional<std::uint64_t> seed = std::nullopt);

/// Text format: header line "L alpha mode seed" (seed '-' when absent),
/// then L rows per axis in x, y, z order, 17 significant digits.
void write_couplings(std::ostream& os, const CouplingMatrix& couplings);
CouplingMatrix read_couplings(std::istream& is);

/// Short stable hex digest of the coupling values, used as series metadata.
std::string fingerprint(const CouplingMatrix& couplings);

}  // namespace spindyn
