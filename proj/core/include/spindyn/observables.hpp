#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spindyn {

/// Time series of the collective observables reported by every backend.
struct ObservableSeries {
    std::vector<double> t;
    std::vector<double> sx;
    std::vector<double> dsx;
    std::optional<std::vector<double>> svn;
    /// Least-dominant natural population of the worst-converged truncated node.
    std::optional<std::vector<double>> natpop_tail;

    std::optional<std::vector<double>> sx_stderr;
    std::optional<std::vector<double>> dsx_stderr;
    std::optional<std::vector<double>> svn_stderr;
    std::optional<std::vector<double>> natpop_tail_stderr;

    /// backend, couplings fingerprint, seeds, realizations, and backend extras (n_t, dt, tree).
    std::map<std::string, std::string> metadata;

    std::size_t size() const { return t.size(); }
};

struct Collective {
    double sx = 0.0;
    double dsx = 0.0;
};

/// <S_x> and Delta S_x from per-site <sigma^x_i> and pair <sigma^x_i sigma^x_j>
/// (i != j entries used; diagonal handled as the Pauli identity).
Collective assemble(std::span<const double> one_point, const Eigen::MatrixXd& two_point);

/// Arithmetic mean per column; stderr = sample stddev / sqrt(R).
ObservableSeries ensemble_average(std::span<const ObservableSeries> series);

/// Named numeric columns in CSV order (t first).
std::vector<std::pair<std::string, const std::vector<double>*>> columns(const ObservableSeries& s);

/// '#'-prefixed "key: value" metadata lines, then a header row and one row per
/// time point; values printed with 17 significant digits.
void write_csv(std::ostream& os, const ObservableSeries& series);
ObservableSeries read_csv(std::istream& is);

/// Writes to a temporary sibling file and renames it into place.
void write_csv_atomic(const std::string& path, const ObservableSeries& series);

}  // namespace spindyn
