#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace geodisagg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct GridCell {
  int id = 0;
  Point center;
  double population = 0.0;
  std::vector<double> covariates;
};

/// Fraction of cell `cell_id` covered by area `area_id`.
struct AreaMembership {
  int area_id = 0;
  int cell_id = 0;
  double coverage = 1.0;
};

struct Area {
  int id = 0;
  std::int64_t count = 0;
};

enum class Estimator { exact, approximate };
enum class Weighting { population, uniform };

/// One row of the area-major stacking shared by every weight and design matrix.
struct StackedRow {
  int area = 0;  // index into areas()
  int cell = 0;  // index into cells()
  double coverage = 1.0;
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Grid cells, areas with observed counts, and the cell/area coverage table.
///
/// Areas keep the order in which they are given. Stacked rows are area-major;
/// within an area they keep membership input order. All matrices built from a
/// problem use this layout.
class DisaggregationProblem {
 public:
  static constexpr double kCoverageTolerance = 1e-9;

  DisaggregationProblem(std::vector<std::string> covariate_names, std::vector<GridCell> cells,
                        std::vector<AreaMembership> memberships, std::vector<Area> areas);

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::vector<GridCell>& cells() const { return cells_; }
  const std::vector<Area>& areas() const { return areas_; }
  const std::vector<StackedRow>& rows() const { return rows_; }

  int n() const { return static_cast<int>(areas_.size()); }
  int N() const { return static_cast<int>(rows_.size()); }
  int area_size(int area) const { return offsets_[area + 1] - offsets_[area]; }
  int area_begin(int area) const { return offsets_[area]; }
  int area_end(int area) const { return offsets_[area + 1]; }

  /// Index of the named covariate, or -1.
  int covariate_index(const std::string& name) const;
  /// Index into cells() for a cell id, or -1.
  int cell_index(int cell_id) const;
  int area_index(int area_id) const;

  Eigen::VectorXd counts() const;
  /// Stacked centers, one per row.
  std::vector<Point> stacked_points() const;
  std::vector<Point> cell_centers() const;

 private:
  std::vector<std::string> covariate_names_;
  std::vector<GridCell> cells_;
  std::vector<Area> areas_;
  std::vector<StackedRow> rows_;
  std::vector<int> offsets_;
  std::unordered_map<int, int> cell_lookup_;
  std::unordered_map<int, int> area_lookup_;
};

/// n x N, row i holds a_i(w_il) m(w_il) on area i's stacked columns.
SparseRowMatrix build_A1(const DisaggregationProblem& problem);

/// n x N, row i holds the normalized v_i(w_il) a_i(w_il) weights. Rows sum to one.
SparseRowMatrix build_A2(const DisaggregationProblem& problem, Weighting weighting);

/// N x n block indicator of the stacking.
SparseRowMatrix build_E(const DisaggregationProblem& problem);

/// Diagonal of G: (sum w)^2 / sum w^2 with w = a m (exact) or v a (approximate).
Eigen::VectorXd build_G(const DisaggregationProblem& problem, Estimator estimator, Weighting weighting);

/// Unnormalized per-row aggregation weights: a m for the exact estimator,
/// v a for the approximate one (v = m for population weighting, 1 for uniform).
Eigen::VectorXd stacked_weights(const DisaggregationProblem& problem, Estimator estimator,
                                Weighting weighting);

/// m_i = sum_l a_i(w_il) m(w_il).
Eigen::VectorXd area_populations(const DisaggregationProblem& problem);

/// Largest distance between any two cell centers.
double domain_diameter(const DisaggregationProblem& problem);

}  // namespace geodisagg
