#include "geodisagg/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "geodisagg/error.hpp"
#include "geodisagg/parallel.hpp"

namespace geodisagg {

namespace {

constexpr Eigen::Index kChunkRows = 512;

Eigen::MatrixXd noise_to_draws(const LaplaceFit& fit, const Eigen::MatrixXd& z) {
  Eigen::LLT<Eigen::MatrixXd> llt(fit.neg_hessian);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
  // Solve L^T x = z for every column.
  Eigen::MatrixXd x = llt.matrixU().solve(z);
  x.colwise() += fit.mode;
  return x;
}

/// Dense design rows [X B Phi] for cells; spatial-only rows [coords Phi] via `spatial`.
Eigen::MatrixXd dense_rows(const AssembledModel& model, std::span<const int> cells, int* clamped) {
  const ModelStructure& s = model.structure();
  const ParameterLayout& layout = s.layout();
  Eigen::MatrixXd rows(cells.size(), layout.dense_size());
  rows.leftCols(layout.u_offset) = s.fixed_rows(cells, clamped);
  std::vector<Point> pts;
  pts.reserve(cells.size());
  for (int c : cells) pts.push_back(s.problem().cells()[c].center);
  rows.rightCols(layout.u_size) = spatial_basis(pts, s.knots(), model.rho(), s.spec().family);
  return rows;
}

/// Stacked row with the largest coverage for every cell, -1 outside all areas.
std::vector<int> home_rows(const DisaggregationProblem& prob) {
  std::vector<int> home(prob.cells().size(), -1);
  for (int l = 0; l < prob.N(); ++l) {
    const StackedRow& r = prob.rows()[l];
    if (home[r.cell] < 0 || prob.rows()[home[r.cell]].coverage < r.coverage) home[r.cell] = l;
  }
  return home;
}

/// Per-cell grid error draws for cells that lie in no training area.
Eigen::RowVectorXd free_grid_error(const GridError& error, int cell, int stacked_rows, int M) {
  std::mt19937_64 rng(derive_seed(error.seed, static_cast<std::uint64_t>(stacked_rows) + cell));
  std::normal_distribution<double> normal(0.0, std::sqrt(error.variance));
  Eigen::RowVectorXd out(M);
  for (int k = 0; k < M; ++k) out[k] = normal(rng);
  return out;
}

/// Adds the grid error of each cell in `cells` to the rows of eta. `rows`
/// are the dense design rows of those cells.
void add_grid_error(Eigen::MatrixXd& eta, std::span<const int> cells, const Eigen::MatrixXd& rows,
                    const AssembledModel& model, const Eigen::MatrixXd& errors, const std::vector<int>& home,
                    const GridError& error) {
  const int M = static_cast<int>(eta.cols());
  if (error.variance > 0.0) {
    for (std::size_t r = 0; r < cells.size(); ++r) {
      const int l = home[cells[r]];
      if (l >= 0) {
        eta.row(r) += errors.row(l);
      } else {
        eta.row(r) += free_grid_error(error, cells[r], static_cast<int>(errors.rows()), M);
      }
    }
  }
  if (error.spatial_precision > 0.0) {
    const int S = model.layout().u_size;
    const Eigen::VectorXd residual = low_rank_residual(model, rows.rightCols(S));
    const std::uint64_t stream = derive_seed(error.seed, ~std::uint64_t{0});
    std::normal_distribution<double> normal;
    for (std::size_t r = 0; r < cells.size(); ++r) {
      const double sd = std::sqrt(residual[r] / error.spatial_precision);
      std::mt19937_64 rng(derive_seed(stream, static_cast<std::uint64_t>(cells[r])));
      normal.reset();
      for (int k = 0; k < M; ++k) eta(r, k) += sd * normal(rng);
    }
  }
}

}  // namespace

double grid_error_variance(const FittedModel& fitted) {
  const ParameterLayout& layout = fitted.structure->layout();
  if (layout.eps_size == 0) return 0.0;
  return 1.0 / fitted.hyper.lambda()[layout.spatial_penalty() + 1];
}

GridError fitted_grid_error(const FittedModel& fitted, std::uint64_t seed) {
  GridError error{grid_error_variance(fitted), seed};
  if (fitted.structure->layout().u_size > 0) {
    error.spatial_precision = fitted.hyper.lambda()[fitted.structure->layout().spatial_penalty()];
  }
  return error;
}

Eigen::VectorXd low_rank_residual(const AssembledModel& model, const Eigen::MatrixXd& phi) {
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_knot_precision(model.omega(), model.structure().spec().nugget);
  const Eigen::MatrixXd half = llt.matrixL().solve(phi.transpose());  // L^{-1} phi'
  return (1.0 - half.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
}

Eigen::MatrixXd grid_error_draws(const AssembledModel& model, const PosteriorDraws& draws, const GridError& error) {
  const ModelStructure& s = model.structure();
  const ParameterLayout& layout = s.layout();
  const DisaggregationProblem& prob = s.problem();
  if (!(error.variance >= 0.0)) throw DomainError("grid error variance must be nonnegative");
  if (layout.eps_size == 0 && error.variance > 0.0) {
    throw UsageError("grid error needs a model with area effects");
  }
  const int M = draws.count();
  const Eigen::VectorXd w = stacked_weights(prob, s.spec().estimator, s.spec().weighting);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(prob.N(), M);
  if (error.variance == 0.0) return out;
  const double sd = std::sqrt(error.variance);
  std::normal_distribution<double> normal;
  for (int i = 0; i < prob.n(); ++i) {
    const int begin = prob.area_begin(i), end = prob.area_end(i);
    const double s1 = w.segment(begin, end - begin).sum();
    const double s2 = w.segment(begin, end - begin).squaredNorm();
    std::mt19937_64 rng(derive_seed(error.seed, static_cast<std::uint64_t>(i)));
    normal.reset();
    for (int k = 0; k < M; ++k) {
      double avg = 0.0;
      for (int l = begin; l < end; ++l) {
        out(l, k) = sd * normal(rng);
        avg += w[l] * out(l, k);
      }
      avg /= s1;
      // Condition the iid errors on their weighted average being eps_i.
      const double shift = (draws.draws(k, layout.eps_offset + i) - avg) * s1 / s2;
      for (int l = begin; l < end; ++l) out(l, k) += w[l] * shift;
    }
  }
  return out;
}

PosteriorDraws sample_posterior(const LaplaceFit& fit, int M, std::uint64_t seed) {
  if (M < 1) throw DomainError("need at least one posterior draw");
  const Eigen::Index dim = fit.mode.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(dim, M);
  for (int m = 0; m < M; ++m) {
    for (Eigen::Index k = 0; k < dim; ++k) z(k, m) = normal(rng);
  }
  PosteriorDraws out;
  out.seed = seed;
  out.draws = noise_to_draws(fit, z).transpose();
  return out;
}

Eigen::VectorXd draw_from_noise(const LaplaceFit& fit, const Eigen::VectorXd& z) {
  return noise_to_draws(fit, z).col(0);
}

double quantile(std::vector<double>& values, double p) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

Summary summarize(std::vector<double>& values) {
  Summary s;
  s.lower = quantile(values, 0.025);
  s.median = quantile(values, 0.5);
  s.upper = quantile(values, 0.975);
  return s;
}

GridPrediction predict_grid(const AssembledModel& model, const PosteriorDraws& draws, std::span<const int> cells,
                            double threshold, const GridError& error) {
  const ModelStructure& s = model.structure();
  const ParameterLayout& layout = s.layout();
  const DisaggregationProblem& prob = s.problem();
  if (draws.draws.cols() != layout.dim) throw DomainError("draws do not match the model dimension");

  GridPrediction out;
  out.threshold = threshold;
  out.cell_ids.reserve(cells.size());
  out.intensity.resize(cells.size());
  out.spatial.resize(cells.size());
  out.exceedance.resize(cells.size());

  const int M = draws.count();
  const int p = static_cast<int>(s.spec().linear_covariates.size());
  const Eigen::MatrixXd coef = draws.draws.leftCols(layout.dense_size()).transpose();  // f x M
  std::vector<int> spatial_cols;
  if (s.spec().coordinate_trend) {
    spatial_cols = {1 + p, 2 + p};
  }
  for (int k = 0; k < layout.u_size; ++k) spatial_cols.push_back(layout.u_offset + k);

  const bool with_error = error.active();
  Eigen::MatrixXd errors;
  std::vector<int> home;
  if (error.variance > 0.0) {
    errors = grid_error_draws(model, draws, error);
    home = home_rows(prob);
  }

  std::vector<double> buf(M);
  for (std::size_t begin = 0; begin < cells.size(); begin += kChunkRows) {
    const std::size_t end = std::min(cells.size(), begin + static_cast<std::size_t>(kChunkRows));
    const std::span<const int> chunk = cells.subspan(begin, end - begin);
    int clamped = 0;
    const Eigen::MatrixXd rows = dense_rows(model, chunk, &clamped);
    out.clamped_values += clamped;
    Eigen::MatrixXd eta = rows * coef;
    Eigen::MatrixXd spatial = Eigen::MatrixXd::Zero(rows.rows(), M);
    for (int col : spatial_cols) spatial.noalias() += rows.col(col) * coef.row(col);
    if (with_error) {
      Eigen::MatrixXd cell_error = Eigen::MatrixXd::Zero(rows.rows(), M);
      add_grid_error(cell_error, chunk, rows, model, errors, home, error);
      eta += cell_error;
      spatial += cell_error;
    }

    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const std::size_t idx = begin + r;
      out.cell_ids.push_back(prob.cells()[chunk[r]].id);
      int above = 0;
      for (int m = 0; m < M; ++m) {
        buf[m] = capped_exp(eta(r, m));
        if (buf[m] > threshold) ++above;
      }
      out.exceedance[idx] = static_cast<double>(above) / M;
      out.intensity[idx] = summarize(buf);
      for (int m = 0; m < M; ++m) buf[m] = spatial(r, m);
      out.spatial[idx] = summarize(buf);
    }
  }
  return out;
}

GridPrediction predict_grid(const AssembledModel& model, const PosteriorDraws& draws, double threshold,
                            const GridError& error) {
  std::vector<int> all(model.structure().problem().cells().size());
  std::iota(all.begin(), all.end(), 0);
  return predict_grid(model, draws, all, threshold, error);
}

std::vector<AreaMembership> training_membership(const DisaggregationProblem& problem) {
  std::vector<AreaMembership> out;
  out.reserve(problem.N());
  for (const StackedRow& r : problem.rows()) {
    out.push_back({problem.areas()[r.area].id, problem.cells()[r.cell].id, r.coverage});
  }
  return out;
}

Eigen::MatrixXd area_mean_draws(const AssembledModel& model, const PosteriorDraws& draws,
                                std::span<const AreaMembership> target, std::vector<int>* area_ids,
                                const GridError& error) {
  const ModelStructure& s = model.structure();
  const ParameterLayout& layout = s.layout();
  const DisaggregationProblem& prob = s.problem();
  if (draws.draws.cols() != layout.dim) throw DomainError("draws do not match the model dimension");
  const int M = draws.count();

  // Group target rows by area, first-appearance order.
  std::vector<int> ids;
  std::unordered_map<int, int> slot;
  std::vector<std::vector<std::pair<int, double>>> members;
  for (const AreaMembership& m : target) {
    const int c = prob.cell_index(m.cell_id);
    if (c < 0) throw StructuralError("target membership references unknown cell " + std::to_string(m.cell_id));
    if (!(m.coverage > 0.0 && m.coverage <= 1.0)) {
      throw StructuralError("target coverage must lie in (0, 1]");
    }
    auto [it, inserted] = slot.emplace(m.area_id, static_cast<int>(ids.size()));
    if (inserted) {
      ids.push_back(m.area_id);
      members.emplace_back();
    }
    members[it->second].emplace_back(c, m.coverage);
  }

  const bool with_error = error.variance > 0.0;
  Eigen::MatrixXd errors;
  std::vector<int> home;
  if (with_error) {
    errors = grid_error_draws(model, draws, error);
    home = home_rows(prob);
  }

  // Coverage-weighted training area effect of each cell.
  std::vector<std::vector<std::pair<int, double>>> cell_areas(prob.cells().size());
  if (layout.eps_size > 0 && !with_error) {
    for (const StackedRow& r : prob.rows()) cell_areas[r.cell].emplace_back(r.area, r.coverage);
  }

  const Estimator estimator = s.spec().estimator;
  const Weighting weighting = s.spec().weighting;
  const Eigen::MatrixXd coef = draws.draws.leftCols(layout.dense_size()).transpose();
  Eigen::MatrixXd mu(M, ids.size());

  std::size_t t = 0;
  while (t < ids.size()) {
    // Collect a chunk of whole target areas.
    std::vector<int> chunk_cells;
    const std::size_t t_begin = t;
    while (t < ids.size() && (chunk_cells.empty() || chunk_cells.size() + members[t].size() <= kChunkRows * 4)) {
      for (const auto& [c, a] : members[t]) chunk_cells.push_back(c);
      ++t;
    }
    const Eigen::MatrixXd rows = dense_rows(model, chunk_cells, nullptr);
    Eigen::MatrixXd eta = rows * coef;  // rows x M
    if (error.active()) add_grid_error(eta, chunk_cells, rows, model, errors, home, error);
    if (!with_error && layout.eps_size > 0) {
      for (std::size_t r = 0; r < chunk_cells.size(); ++r) {
        const auto& owners = cell_areas[chunk_cells[r]];
        double total = 0.0;
        for (const auto& [area, cov] : owners) total += cov;
        for (const auto& [area, cov] : owners) {
          eta.row(r) += (cov / total) * draws.draws.col(layout.eps_offset + area).transpose();
        }
      }
    }
    std::size_t row = 0;
    for (std::size_t a = t_begin; a < t; ++a) {
      double weight_total = 0.0;
      double population = 0.0;
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(M);
      for (const auto& [c, cov] : members[a]) {
        const double m = prob.cells()[c].population;
        if (estimator == Estimator::exact) {
          for (int k = 0; k < M; ++k) acc[k] += cov * m * capped_exp(eta(row, k));
          weight_total += cov * m;
        } else {
          const double w = weighting == Weighting::population ? cov * m : cov;
          acc += w * eta.row(row).transpose();
          weight_total += w;
          population += cov * m;
        }
        ++row;
      }
      if (!(weight_total > 0.0)) {
        throw StructuralError("target area " + std::to_string(ids[a]) + " has no positive weight");
      }
      if (estimator == Estimator::exact) {
        mu.col(a) = acc;
      } else {
        for (int k = 0; k < M; ++k) mu(k, a) = population * capped_exp(acc[k] / weight_total);
      }
    }
  }
  if (area_ids) *area_ids = ids;
  return mu;
}

AreaPrediction aggregate_areas(const AssembledModel& model, const PosteriorDraws& draws,
                               std::span<const AreaMembership> target, std::uint64_t seed, const GridError& error) {
  AreaPrediction out;
  const Eigen::MatrixXd mu = area_mean_draws(model, draws, target, &out.area_ids, error);
  const int M = draws.count();
  std::mt19937_64 rng(seed);
  out.mean.resize(mu.cols());
  out.predictive.resize(mu.cols());
  std::vector<double> buf(M);
  Eigen::MatrixXd counts(M, mu.cols());
  for (int k = 0; k < M; ++k) {
    for (Eigen::Index a = 0; a < mu.cols(); ++a) {
      std::poisson_distribution<std::int64_t> poisson(std::max(mu(k, a), 1e-300));
      counts(k, a) = static_cast<double>(poisson(rng));
    }
  }
  for (Eigen::Index a = 0; a < mu.cols(); ++a) {
    for (int k = 0; k < M; ++k) buf[k] = mu(k, a);
    out.mean[a] = summarize(buf);
    for (int k = 0; k < M; ++k) buf[k] = counts(k, a);
    out.predictive[a] = summarize(buf);
  }
  return out;
}

std::vector<double> correlation_curve(const FittedModel& fitted, std::span<const double> distances) {
  std::vector<double> out;
  out.reserve(distances.size());
  const CorrelationFamily family = fitted.structure->spec().family;
  for (double d : distances) out.push_back(correlation(family, fitted.hyper.rho(), d));
  return out;
}

}  // namespace geodisagg
