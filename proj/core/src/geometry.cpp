#include "geodisagg/geometry.hpp"

#include <algorithm>
#include <unordered_set>

#include "geodisagg/error.hpp"

namespace geodisagg {

DisaggregationProblem::DisaggregationProblem(std::vector<std::string> covariate_names,
                                             std::vector<GridCell> cells,
                                             std::vector<AreaMembership> memberships,
                                             std::vector<Area> areas)
    : covariate_names_(std::move(covariate_names)), cells_(std::move(cells)), areas_(std::move(areas)) {
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const GridCell& cell = cells_[c];
    if (!(cell.population >= 0.0) || !std::isfinite(cell.population)) {
      throw StructuralError("cell " + std::to_string(cell.id) + " has invalid population");
    }
    if (cell.covariates.size() != covariate_names_.size()) {
      throw StructuralError("cell " + std::to_string(cell.id) + " has " +
                            std::to_string(cell.covariates.size()) + " covariates, expected " +
                            std::to_string(covariate_names_.size()));
    }
    if (!cell_lookup_.emplace(cell.id, static_cast<int>(c)).second) {
      throw StructuralError("duplicate cell id " + std::to_string(cell.id));
    }
  }
  for (std::size_t a = 0; a < areas_.size(); ++a) {
    if (areas_[a].count < 0) {
      throw StructuralError("area " + std::to_string(areas_[a].id) + " has a negative count");
    }
    if (!area_lookup_.emplace(areas_[a].id, static_cast<int>(a)).second) {
      throw StructuralError("duplicate area id " + std::to_string(areas_[a].id));
    }
  }

  std::vector<std::vector<StackedRow>> per_area(areas_.size());
  std::vector<double> cell_total(cells_.size(), 0.0);
  std::unordered_set<std::uint64_t> seen;
  for (const AreaMembership& m : memberships) {
    const auto area_it = area_lookup_.find(m.area_id);
    if (area_it == area_lookup_.end()) {
      throw StructuralError("membership references unknown area " + std::to_string(m.area_id));
    }
    const auto cell_it = cell_lookup_.find(m.cell_id);
    if (cell_it == cell_lookup_.end()) {
      throw StructuralError("membership references unknown cell " + std::to_string(m.cell_id));
    }
    if (!(m.coverage > 0.0 && m.coverage <= 1.0)) {
      throw StructuralError("coverage of cell " + std::to_string(m.cell_id) + " in area " +
                            std::to_string(m.area_id) + " must lie in (0, 1]");
    }
    const auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(area_it->second)) << 32) |
                     static_cast<std::uint32_t>(cell_it->second);
    if (!seen.insert(key).second) {
      throw StructuralError("duplicate membership (area " + std::to_string(m.area_id) + ", cell " +
                            std::to_string(m.cell_id) + ")");
    }
    per_area[area_it->second].push_back({area_it->second, cell_it->second, m.coverage});
    cell_total[cell_it->second] += m.coverage;
  }
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    if (cell_total[c] > 1.0 + kCoverageTolerance) {
      throw StructuralError("cell " + std::to_string(cells_[c].id) + " has total coverage " +
                            std::to_string(cell_total[c]) + " > 1");
    }
  }

  offsets_.assign(1, 0);
  for (std::size_t a = 0; a < areas_.size(); ++a) {
    if (per_area[a].empty()) {
      throw StructuralError("area " + std::to_string(areas_[a].id) + " has no memberships");
    }
    rows_.insert(rows_.end(), per_area[a].begin(), per_area[a].end());
    offsets_.push_back(static_cast<int>(rows_.size()));
  }
}

int DisaggregationProblem::covariate_index(const std::string& name) const {
  const auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  return it == covariate_names_.end() ? -1 : static_cast<int>(it - covariate_names_.begin());
}

int DisaggregationProblem::cell_index(int cell_id) const {
  const auto it = cell_lookup_.find(cell_id);
  return it == cell_lookup_.end() ? -1 : it->second;
}

int DisaggregationProblem::area_index(int area_id) const {
  const auto it = area_lookup_.find(area_id);
  return it == area_lookup_.end() ? -1 : it->second;
}

Eigen::VectorXd DisaggregationProblem::counts() const {
  Eigen::VectorXd y(n());
  for (int i = 0; i < n(); ++i) y[i] = static_cast<double>(areas_[i].count);
  return y;
}

std::vector<Point> DisaggregationProblem::stacked_points() const {
  std::vector<Point> out;
  out.reserve(rows_.size());
  for (const StackedRow& r : rows_) out.push_back(cells_[r.cell].center);
  return out;
}

std::vector<Point> DisaggregationProblem::cell_centers() const {
  std::vector<Point> out;
  out.reserve(cells_.size());
  for (const GridCell& c : cells_) out.push_back(c.center);
  return out;
}

namespace {

SparseRowMatrix weights_to_rows(const DisaggregationProblem& problem, const Eigen::VectorXd& w) {
  SparseRowMatrix A(problem.n(), problem.N());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(problem.N());
  for (int i = 0; i < problem.n(); ++i) {
    for (int l = problem.area_begin(i); l < problem.area_end(i); ++l) triplets.emplace_back(i, l, w[l]);
  }
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

}  // namespace

Eigen::VectorXd stacked_weights(const DisaggregationProblem& problem, Estimator estimator,
                                Weighting weighting) {
  Eigen::VectorXd w(problem.N());
  for (int l = 0; l < problem.N(); ++l) {
    const StackedRow& r = problem.rows()[l];
    const double m = problem.cells()[r.cell].population;
    if (estimator == Estimator::exact || weighting == Weighting::population) {
      w[l] = r.coverage * m;
    } else {
      w[l] = r.coverage;
    }
  }
  return w;
}

SparseRowMatrix build_A1(const DisaggregationProblem& problem) {
  return weights_to_rows(problem, stacked_weights(problem, Estimator::exact, Weighting::population));
}

SparseRowMatrix build_A2(const DisaggregationProblem& problem, Weighting weighting) {
  Eigen::VectorXd w = stacked_weights(problem, Estimator::approximate, weighting);
  for (int i = 0; i < problem.n(); ++i) {
    double total = 0.0;
    for (int l = problem.area_begin(i); l < problem.area_end(i); ++l) total += w[l];
    if (!(total > 0.0)) {
      throw StructuralError("area " + std::to_string(problem.areas()[i].id) +
                            " has zero total population; use uniform weighting");
    }
    for (int l = problem.area_begin(i); l < problem.area_end(i); ++l) w[l] /= total;
  }
  return weights_to_rows(problem, w);
}

SparseRowMatrix build_E(const DisaggregationProblem& problem) {
  SparseRowMatrix E(problem.N(), problem.n());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(problem.N());
  for (int l = 0; l < problem.N(); ++l) triplets.emplace_back(l, problem.rows()[l].area, 1.0);
  E.setFromTriplets(triplets.begin(), triplets.end());
  return E;
}

Eigen::VectorXd build_G(const DisaggregationProblem& problem, Estimator estimator, Weighting weighting) {
  const Eigen::VectorXd w = stacked_weights(problem, estimator, weighting);
  Eigen::VectorXd g(problem.n());
  for (int i = 0; i < problem.n(); ++i) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int l = problem.area_begin(i); l < problem.area_end(i); ++l) {
      sum += w[l];
      sum_sq += w[l] * w[l];
    }
    if (!(sum_sq > 0.0)) {
      throw StructuralError("area " + std::to_string(problem.areas()[i].id) +
                            " has all-zero aggregation weights");
    }
    g[i] = sum * sum / sum_sq;
  }
  return g;
}

Eigen::VectorXd area_populations(const DisaggregationProblem& problem) {
  const Eigen::VectorXd w = stacked_weights(problem, Estimator::exact, Weighting::population);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(problem.n());
  for (int l = 0; l < problem.N(); ++l) m[problem.rows()[l].area] += w[l];
  return m;
}

double domain_diameter(const DisaggregationProblem& problem) {
  // Farthest pair lies on the convex hull.
  std::vector<Point> pts = problem.cell_centers();
  if (pts.size() < 2) return 0.0;
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k);
  double best = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) best = std::max(best, distance(hull[i], hull[j]));
  }
  return best;
}

}  // namespace geodisagg
