#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "geodisagg/error.hpp"
#include "geodisagg/predict.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace geodisagg;

namespace {

FittedModel small_fit(Estimator e, int side = 8, int tile = 2, std::uint64_t seed = 21) {
  auto p = geodisagg::testing::tiled_problem(side, tile, seed);
  ModelSpec spec;
  spec.estimator = e;
  spec.knots = 6;
  spec.linear_covariates = {"x1"};
  FitOptions options;
  options.restarts = 2;
  return fit(p, spec, options);
}

PosteriorDraws repeated(const Eigen::VectorXd& xi, int M) {
  PosteriorDraws d;
  d.draws = xi.transpose().replicate(M, 1);
  return d;
}

}  // namespace

TEST(Predict, ZeroNoiseDrawIsMode) {
  FittedModel f = small_fit(Estimator::approximate);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(f.laplace.mode.size());
  EXPECT_EQ(draw_from_noise(f.laplace, z), f.laplace.mode);
}

TEST(Predict, SamplingDeterminismAndMoments) {
  FittedModel f = small_fit(Estimator::approximate);
  PosteriorDraws a = sample_posterior(f.laplace, 50, 7), b = sample_posterior(f.laplace, 50, 7),
                 c = sample_posterior(f.laplace, 50, 8);
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_NE(a.draws, c.draws);

  const Eigen::MatrixXd& sigma = f.laplace.covariance;
  const int dim = static_cast<int>(sigma.rows());

  const int M1 = 10000;
  PosteriorDraws d1 = sample_posterior(f.laplace, M1, 9);
  Eigen::VectorXd mean1 = d1.draws.colwise().mean();
  for (int k = 0; k < dim; ++k)
    EXPECT_LE(std::abs(mean1[k] - f.laplace.mode[k]), 3.0 * std::sqrt(sigma(k, k) / M1)) << k;

  const int M = 50000;
  PosteriorDraws d = sample_posterior(f.laplace, M, 10);
  Eigen::MatrixXd centered = d.draws.rowwise() - d.draws.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / (M - 1);
  int violations = 0;
  for (int j = 0; j < dim; ++j)
    for (int k = 0; k < dim; ++k) {
      const double se = std::sqrt((sigma(j, j) * sigma(k, k) + sigma(j, k) * sigma(j, k)) / M);
      if (std::abs(cov(j, k) - sigma(j, k)) > 5.0 * se) ++violations;
    }
  EXPECT_EQ(violations, 0);
}

TEST(Predict, QuantileInterpolates) {
  std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.025), 1.075);
  std::vector<double> empty;
  EXPECT_THROW(quantile(empty, 0.5), DomainError);
}

TEST(Predict, IdenticalDrawsGiveDegenerateIntervals) {
  FittedModel f = small_fit(Estimator::approximate);
  AssembledModel m = f.model();
  GridPrediction g = predict_grid(m, repeated(f.laplace.mode, 20), 0.0);
  for (std::size_t c = 0; c < g.intensity.size(); ++c) {
    EXPECT_EQ(g.intensity[c].lower, g.intensity[c].median);
    EXPECT_EQ(g.intensity[c].upper, g.intensity[c].median);
    EXPECT_EQ(g.exceedance[c], 1.0);
  }
}

TEST(Predict, InterceptOnlyHandPercentiles) {
  geodisagg::testing::TinyInstance t;
  AssembledModel m = assemble(t.problem(), t.spec(Estimator::approximate), t.rho);
  // Draws of the intercept take the values 0, 0, 0, log 4, log 4; u stays 0.
  PosteriorDraws d;
  d.draws = Eigen::MatrixXd::Zero(5, 2);
  d.draws(3, 0) = d.draws(4, 0) = std::log(4.0);
  GridPrediction g = predict_grid(m, d, 2.0);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(g.intensity[c].median, 1.0);
    EXPECT_DOUBLE_EQ(g.intensity[c].lower, 1.0);
    // Position 0.975 * 4 = 3.9 falls between two draws equal to 4.
    EXPECT_DOUBLE_EQ(g.intensity[c].upper, 4.0);
    EXPECT_DOUBLE_EQ(g.exceedance[c], 0.4);
  }
  // Four draws, two of each: the median interpolates the intensities, 2.5 = (1 + 4) / 2.
  d.draws = Eigen::MatrixXd::Zero(4, 2);
  d.draws(2, 0) = d.draws(3, 0) = std::log(4.0);
  g = predict_grid(m, d);
  EXPECT_DOUBLE_EQ(g.intensity[0].median, 2.5);
  EXPECT_DOUBLE_EQ(g.intensity[0].lower, 1.0);
  EXPECT_NEAR(g.intensity[0].upper, 4.0, 1e-15);
}

TEST(Predict, AreaMeansAtModeMatchModel) {
  for (Estimator e : {Estimator::exact, Estimator::approximate}) {
    FittedModel f = small_fit(e);
    AssembledModel m = f.model();
    std::vector<AreaMembership> target = training_membership(m.structure().problem());
    Eigen::MatrixXd mu = area_mean_draws(m, repeated(f.laplace.mode, 3), target);
    Eigen::VectorXd expected = mean(m, f.laplace.mode);
    for (int i = 0; i < expected.size(); ++i) EXPECT_NEAR(mu(1, i), expected[i], 1e-10 * expected[i]);
  }
}

TEST(Predict, ExactAreaAdditivity) {
  FittedModel f = small_fit(Estimator::exact, 8, 4);
  AssembledModel m = f.model();
  const DisaggregationProblem& prob = m.structure().problem();
  PosteriorDraws d = sample_posterior(f.laplace, 200, 3);
  // Area 0 whole, and split into odd/even stacked rows as areas 100 and 101.
  std::vector<AreaMembership> whole, parts;
  for (int l = prob.area_begin(0); l < prob.area_end(0); ++l) {
    const int cell_id = prob.cells()[prob.rows()[l].cell].id;
    whole.push_back({0, cell_id, 1.0});
    parts.push_back({100 + (l % 2), cell_id, 1.0});
  }
  Eigen::MatrixXd w = area_mean_draws(m, d, whole), p = area_mean_draws(m, d, parts);
  for (int k = 0; k < d.count(); ++k) EXPECT_NEAR(p(k, 0) + p(k, 1), w(k, 0), 1e-10 * w(k, 0));

  // The same split with grid error is additive as well.
  GridError err{0.3, 5};
  w = area_mean_draws(m, d, whole, nullptr, err);
  p = area_mean_draws(m, d, parts, nullptr, err);
  for (int k = 0; k < d.count(); ++k) EXPECT_NEAR(p(k, 0) + p(k, 1), w(k, 0), 1e-10 * w(k, 0));
}

TEST(Predict, AggregatesAreOrderedAndReproducible) {
  FittedModel f = small_fit(Estimator::approximate);
  AssembledModel m = f.model();
  PosteriorDraws d = sample_posterior(f.laplace, 300, 4);
  std::vector<AreaMembership> target = training_membership(m.structure().problem());
  AreaPrediction a = aggregate_areas(m, d, target, 11), b = aggregate_areas(m, d, target, 11);
  ASSERT_EQ(a.area_ids.size(), static_cast<std::size_t>(m.structure().problem().n()));
  for (std::size_t i = 0; i < a.area_ids.size(); ++i) {
    EXPECT_LE(a.mean[i].lower, a.mean[i].median);
    EXPECT_LE(a.mean[i].median, a.mean[i].upper);
    EXPECT_LE(a.predictive[i].lower, a.predictive[i].median);
    EXPECT_LE(a.predictive[i].median, a.predictive[i].upper);
    // Poisson noise widens the interval.
    EXPECT_LE(a.predictive[i].lower, a.mean[i].lower + 1.0);
    EXPECT_GE(a.predictive[i].upper, a.mean[i].upper - 1.0);
    EXPECT_EQ(a.predictive[i].median, b.predictive[i].median);
  }
}

TEST(Predict, TargetErrors) {
  FittedModel f = small_fit(Estimator::approximate);
  AssembledModel m = f.model();
  PosteriorDraws d = repeated(f.laplace.mode, 2);
  std::vector<AreaMembership> unknown{{0, 9999, 1.0}};
  EXPECT_THROW(area_mean_draws(m, d, unknown), StructuralError);
  std::vector<AreaMembership> bad{{0, 0, 0.0}};
  EXPECT_THROW(area_mean_draws(m, d, bad), StructuralError);
}

TEST(Predict, GridErrorAveragesToAreaEffect) {
  for (Estimator e : {Estimator::exact, Estimator::approximate}) {
    FittedModel f = small_fit(e, 8, 4);
    AssembledModel m = f.model();
    const auto& s = m.structure();
    const DisaggregationProblem& prob = s.problem();
    PosteriorDraws d = sample_posterior(f.laplace, 40, 6);
    GridError err{0.5, 2};
    Eigen::MatrixXd errors = grid_error_draws(m, d, err);
    EXPECT_EQ(errors, grid_error_draws(m, d, err));
    Eigen::VectorXd w = stacked_weights(prob, e, Weighting::population);
    for (int i = 0; i < prob.n(); ++i)
      for (int k = 0; k < d.count(); ++k) {
        double avg = 0.0, total = 0.0;
        for (int l = prob.area_begin(i); l < prob.area_end(i); ++l) {
          avg += w[l] * errors(l, k);
          total += w[l];
        }
        EXPECT_NEAR(avg / total, d.draws(k, s.layout().eps_offset + i), 1e-12);
      }
    EXPECT_TRUE(grid_error_draws(m, d, GridError{0.0, 2}).isZero(0.0));
  }
}

TEST(Predict, MoreDrawsMoveMediansWithinMonteCarloError) {
  FittedModel f = small_fit(Estimator::approximate);
  AssembledModel m = f.model();
  GridPrediction small = predict_grid(m, sample_posterior(f.laplace, 1000, 1));
  PosteriorDraws big = sample_posterior(f.laplace, 10000, 2);
  GridPrediction large = predict_grid(m, big);
  // Standard error of a sample median: sqrt(pi/2) sd / sqrt(M), with the
  // spread taken from the central 95% interval of the larger sample.
  for (std::size_t c = 0; c < small.intensity.size(); ++c) {
    const double sd = (large.intensity[c].upper - large.intensity[c].lower) / (2 * 1.96);
    const double se = std::sqrt(std::numbers::pi / 2) * sd / std::sqrt(1000.0);
    EXPECT_LE(std::abs(small.intensity[c].median - large.intensity[c].median), 4.0 * se) << c;
  }
}

TEST(Predict, ContainmentAndProbabilities) {
  FittedModel f = small_fit(Estimator::exact);
  AssembledModel m = f.model();
  PosteriorDraws d = sample_posterior(f.laplace, 500, 5);
  GridPrediction g = predict_grid(m, d, 0.5, GridError{grid_error_variance(f), 3});
  for (std::size_t c = 0; c < g.intensity.size(); ++c) {
    EXPECT_LE(g.intensity[c].lower, g.intensity[c].median);
    EXPECT_LE(g.intensity[c].median, g.intensity[c].upper);
    EXPECT_LE(g.spatial[c].lower, g.spatial[c].median);
    EXPECT_LE(g.spatial[c].median, g.spatial[c].upper);
    EXPECT_GE(g.exceedance[c], 0.0);
    EXPECT_LE(g.exceedance[c], 1.0);
  }
}

TEST(Predict, LowRankResidualWithOneKnot) {
  auto p = geodisagg::testing::tiled_problem(6, 2, 31);
  ModelSpec spec;
  spec.knots = 1;
  const double rho = 0.4;
  AssembledModel m = assemble(p, spec, rho);
  const Point knot = m.structure().knots().knots[0];
  std::vector<Point> pts{knot, {knot.x + 1.5, knot.y}, {knot.x + 40.0, knot.y + 40.0}};
  const Eigen::VectorXd r = low_rank_residual(m, spatial_basis(pts, m.structure().knots(), rho, spec.family));
  for (int k = 0; k < 3; ++k) {
    const double d = std::hypot(pts[k].x - knot.x, pts[k].y - knot.y);
    const double c = correlation(spec.family, rho, d);
    EXPECT_NEAR(r[k], 1.0 - c * c / (1.0 + spec.nugget), 1e-12) << k;
  }
  EXPECT_LT(r[0], 1e-7);
  EXPECT_NEAR(r[2], 1.0, 1e-9);
}

TEST(Predict, LowRankResidualSpreadAndConsistency) {
  auto p = geodisagg::testing::tiled_problem(8, 2, 32);
  ModelSpec spec;
  spec.knots = 3;
  spec.area_effects = false;
  AssembledModel m = assemble(p, spec, 0.5);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(m.layout().dim);
  xi[0] = -1.0;
  const int M = 20000;
  PosteriorDraws d = repeated(xi, M);
  GridError err;
  err.seed = 9;
  err.spatial_precision = 4.0;
  GridPrediction g = predict_grid(m, d, 0.0, err);

  std::vector<int> cells(p->cells().size());
  std::iota(cells.begin(), cells.end(), 0);
  std::vector<Point> pts;
  for (const GridCell& c : p->cells()) pts.push_back(c.center);
  const Eigen::VectorXd r = low_rank_residual(m, spatial_basis(pts, m.structure().knots(), 0.5, spec.family));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double sd = std::sqrt(r[c] / 4.0);
    // Interval half-width of a normal sample; sampling error of the 2.5/97.5%
    // quantiles at M = 20000 is under 2% of sd.
    EXPECT_NEAR((g.spatial[c].upper - g.spatial[c].lower) / (2 * 1.959964), sd, 0.05 * sd + 1e-12) << c;
    EXPECT_NEAR(g.spatial[c].median, 0.0, 0.05 * sd + 1e-12) << c;
  }

  // Single-cell targets reproduce the grid intensity times population draw by draw.
  std::vector<AreaMembership> target;
  for (const GridCell& c : p->cells()) target.push_back({c.id, c.id, 1.0});
  std::vector<int> ids;
  PosteriorDraws few = repeated(xi, 50);
  Eigen::MatrixXd mu = area_mean_draws(m, few, target, &ids, err);
  GridPrediction g50 = predict_grid(m, few, 0.0, err);
  for (std::size_t a = 0; a < ids.size(); ++a) {
    const double pop = p->cells()[a].population;
    std::vector<double> col(mu.col(a).data(), mu.col(a).data() + mu.rows());
    EXPECT_NEAR(quantile(col, 0.5), pop * g50.intensity[a].median, 1e-12 * pop);
  }

  // The helper reads both parts from a fit.
  FittedModel f = small_fit(Estimator::approximate);
  GridError fitted = fitted_grid_error(f, 5);
  const ParameterLayout& layout = f.structure->layout();
  EXPECT_EQ(fitted.variance, grid_error_variance(f));
  EXPECT_EQ(fitted.spatial_precision, f.hyper.lambda()[layout.spatial_penalty()]);
  EXPECT_EQ(fitted.seed, 5u);
}

TEST(Predict, CorrelationCurve) {
  FittedModel f = small_fit(Estimator::approximate);
  std::vector<double> grid;
  for (int k = 0; k <= 50; ++k) grid.push_back(0.3 * k);
  std::vector<double> curve = correlation_curve(f, grid);
  EXPECT_EQ(curve[0], 1.0);
  for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_LE(curve[k], curve[k - 1]);

  FittedModel e = f;
  auto spec = f.structure->spec();
  spec.family = CorrelationFamily::exponential;
  e.structure = std::make_shared<const ModelStructure>(f.structure->problem_ptr(), spec, f.structure->knots());
  const double range = 1.0 / e.hyper.rho();
  std::vector<double> at_range{range};
  EXPECT_NEAR(correlation_curve(e, at_range)[0], std::exp(-1.0), 1e-14);
}
