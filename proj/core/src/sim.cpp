#include "geodisagg/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "geodisagg/error.hpp"
#include "geodisagg/parallel.hpp"

namespace geodisagg {

MaternScale parse_matern_scale(std::string_view name) {
  if (name == "range") return MaternScale::range;
  if (name == "practical") return MaternScale::practical;
  throw UsageError("unknown Matern scale '" + std::string(name) + "' (expected range or practical)");
}

std::string to_string(MaternScale scale) { return scale == MaternScale::range ? "range" : "practical"; }

double matern_nu1(double d, double range, MaternScale scale) {
  if (!(range > 0.0)) throw DomainError("range must be positive");
  if (d < 0.0) throw DomainError("distance must be nonnegative");
  if (d == 0.0) return 1.0;
  const double t = scale == MaternScale::range ? d / range : std::sqrt(8.0) * d / range;
  if (t > 700.0) return 0.0;
  return t * std::cyl_bessel_k(1.0, t);
}

int paper_knot_count(int domain, int area_size) {
  switch (area_size) {
    case 4: return 350;
    case 10: return 200;
    case 20: return 50;
    default: {
      const int per_side = domain / area_size;
      return default_knot_count(per_side * per_side);
    }
  }
}

ScenarioConfig ScenarioConfig::scenario(char name, int area_size) {
  ScenarioConfig c;
  if (name == 'a') {
    c.range = 3.0;
  } else if (name == 'b') {
    c.range = 10.0;
  } else {
    throw UsageError(std::string("unknown scenario '") + name + "' (expected a or b)");
  }
  c.area_size = area_size;
  return c;
}

int ScenarioConfig::knot_count() const { return knots > 0 ? knots : paper_knot_count(domain, area_size); }

void ScenarioConfig::validate() const {
  if (domain < 1) throw DomainError("domain size must be positive");
  if (area_size < 1 || domain % area_size != 0) {
    throw DomainError("area size " + std::to_string(area_size) + " does not divide domain size " +
                      std::to_string(domain));
  }
  if (!(range > 0.0)) throw DomainError("range must be positive");
  if (!(variance >= 0.0)) throw DomainError("variance must be nonnegative");
  if (!(covariate_max > 0.0)) throw DomainError("covariate range must be positive");
  if (replicates < 1) throw DomainError("need at least one replicate");
}

GrfSampler::GrfSampler(const ScenarioConfig& config) {
  config.validate();
  size_ = config.domain * config.domain;
  if (config.variance == 0.0) {
    zero_ = true;
    return;
  }
  const int D = config.domain;
  // Correlation depends only on the grid offset; tabulate it once.
  std::vector<double> table(static_cast<std::size_t>(D) * D);
  for (int dy = 0; dy < D; ++dy) {
    for (int dx = 0; dx < D; ++dx) {
      table[dy * D + dx] = config.variance * matern_nu1(std::hypot(dx, dy), config.range, config.scale);
    }
  }
  factor_.resize(size_, size_);
  for (int j = 0; j < size_; ++j) {
    const int xj = j % D, yj = j / D;
    for (int i = j; i < size_; ++i) {
      factor_(i, j) = table[std::abs(i / D - yj) * D + std::abs(i % D - xj)];
    }
    factor_(j, j) += 1e-10;
  }
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(factor_);
  if (llt.info() != Eigen::Success) throw NumericalError("field covariance factorization failed");
}

Eigen::VectorXd GrfSampler::draw(std::uint64_t seed) const {
  if (zero_) return Eigen::VectorXd::Zero(size_);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(size_);
  for (int i = 0; i < size_; ++i) z[i] = normal(rng);
  return factor_.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd simulate_grf(const ScenarioConfig& config, std::uint64_t seed) {
  return GrfSampler(config).draw(seed);
}

Eigen::VectorXd simulate_covariate(const ScenarioConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
  const int D = config.domain;
  const double w = 2.0 * std::numbers::pi / D;
  Eigen::VectorXd x(D * D);
  for (int y = 0; y < D; ++y) {
    for (int c = 0; c < D; ++c) {
      const double u = c + 0.5, v = y + 0.5;
      x[y * D + c] = std::sin(w * u + p1) + std::cos(w * v + p2) + 0.5 * std::sin(w * (u + v) + p3);
    }
  }
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  if (hi > lo) {
    x = (x.array() - lo) * (config.covariate_max / (hi - lo));
  } else {
    x.setConstant(0.5 * config.covariate_max);
  }
  return x;
}

std::vector<AreaMembership> square_tiling(int domain, int tile) {
  if (tile < 1 || domain % tile != 0) throw DomainError("tile size must divide the domain");
  const int per_side = domain / tile;
  std::vector<AreaMembership> out;
  out.reserve(static_cast<std::size_t>(domain) * domain);
  for (int ty = 0; ty < per_side; ++ty) {
    for (int tx = 0; tx < per_side; ++tx) {
      const int area = ty * per_side + tx;
      for (int y = ty * tile; y < (ty + 1) * tile; ++y) {
        for (int x = tx * tile; x < (tx + 1) * tile; ++x) out.push_back({area, y * domain + x, 1.0});
      }
    }
  }
  return out;
}

SimulatedDataset simulate_dataset(const ScenarioConfig& config, std::uint64_t seed) {
  return simulate_dataset(config, GrfSampler(config), seed);
}

SimulatedDataset simulate_dataset(const ScenarioConfig& config, const GrfSampler& sampler, std::uint64_t seed) {
  config.validate();
  const int D = config.domain;
  if (sampler.size() != D * D) throw DomainError("field sampler does not match the domain");

  TruthSurface truth;
  truth.spatial = sampler.draw(derive_seed(seed, 1));
  truth.covariate = simulate_covariate(config, derive_seed(seed, 2));
  truth.log_intensity = (config.beta0 + config.beta1 * truth.covariate.array() + truth.spatial.array()).matrix();
  truth.intensity = truth.log_intensity.array().exp().matrix();

  std::vector<GridCell> cells(D * D);
  for (int y = 0; y < D; ++y) {
    for (int x = 0; x < D; ++x) {
      const int id = y * D + x;
      cells[id] = GridCell{id, Point{x + 0.5, y + 0.5}, 1.0, {truth.covariate[id]}};
    }
  }
  std::vector<AreaMembership> members = square_tiling(D, config.area_size);
  const int n = config.area_count();
  truth.area_mean = Eigen::VectorXd::Zero(n);
  for (const AreaMembership& m : members) truth.area_mean[m.area_id] += truth.intensity[m.cell_id];

  std::mt19937_64 rng(derive_seed(seed, 3));
  truth.cell_counts.resize(D * D);
  for (int c = 0; c < D * D; ++c) {
    std::poisson_distribution<std::int64_t> poisson(truth.intensity[c]);
    truth.cell_counts[c] = poisson(rng);
  }
  std::vector<Area> areas(n);
  for (int i = 0; i < n; ++i) areas[i].id = i;
  for (const AreaMembership& m : members) areas[m.area_id].count += truth.cell_counts[m.cell_id];

  SimulatedDataset out;
  out.problem = std::make_shared<const DisaggregationProblem>(std::vector<std::string>{"x1"}, std::move(cells),
                                                              std::move(members), std::move(areas));
  out.truth = std::move(truth);
  return out;
}

double rmse(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DomainError("score inputs have different lengths");
  if (estimate.empty()) throw DomainError("score inputs are empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double e = estimate[i] - truth[i];
    sum += e * e;
  }
  return std::sqrt(sum / estimate.size());
}

MetricScore score_metric(std::span<const Summary> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DomainError("score inputs have different lengths");
  std::vector<double> medians;
  medians.reserve(estimate.size());
  int covered = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    medians.push_back(estimate[i].median);
    if (estimate[i].lower <= truth[i] && truth[i] <= estimate[i].upper) ++covered;
  }
  MetricScore s;
  s.rmse = rmse(medians, truth);
  s.coverage = static_cast<double>(covered) / estimate.size();
  return s;
}

ScoreReport score(const GridPrediction& grid, const AreaPrediction& areas, const TruthSurface& truth) {
  auto as_span = [](const Eigen::VectorXd& v) { return std::span<const double>(v.data(), v.size()); };
  ScoreReport r;
  r.spatial = score_metric(grid.spatial, as_span(truth.spatial));
  r.intensity = score_metric(grid.intensity, as_span(truth.intensity));
  r.area_mean = score_metric(areas.mean, as_span(truth.area_mean));
  return r;
}

ModelSpec simulation_model(const ScenarioConfig& config, Estimator estimator, CorrelationFamily family) {
  ModelSpec spec;
  spec.linear_covariates = {"x1"};
  spec.family = family;
  spec.estimator = estimator;
  spec.knots = config.knot_count();
  spec.knot_seed = config.seed;
  return spec;
}

ReplicateSeeds replicate_seeds(std::uint64_t seed) {
  return ReplicateSeeds{derive_seed(seed, 11), derive_seed(seed, 12), derive_seed(seed, 13)};
}

ReplicateResult run_replicate(const SimulatedDataset& data, const ScenarioConfig& config, Estimator estimator,
                              CorrelationFamily family, const FitOptions& fit_options, int draws,
                              bool grid_error, std::uint64_t seed) {
  ReplicateResult row;
  row.seed = seed;
  row.estimator = estimator;
  try {
    const ReplicateSeeds seeds = replicate_seeds(seed);
    ModelSpec spec = simulation_model(config, estimator, family);
    spec.knot_seed = seeds.knots;
    FitOptions options = fit_options;
    options.seed = seeds.fit;
    const auto start = std::chrono::steady_clock::now();
    const FittedModel fitted = fit(data.problem, spec, options);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const AssembledModel model = fitted.model();
    const PosteriorDraws posterior = sample_posterior(fitted.laplace, draws, derive_seed(seeds.predict, 1));
    GridError error;
    if (grid_error) error = fitted_grid_error(fitted, derive_seed(seeds.predict, 2));
    const GridPrediction grid = predict_grid(model, posterior, 0.0, error);
    const std::vector<AreaMembership> training = training_membership(*data.problem);
    const AreaPrediction areas = aggregate_areas(model, posterior, training, derive_seed(seeds.predict, 3), error);
    row.score = score(grid, areas, data.truth);
    row.score.fit_seconds = seconds;
    row.hyper = fitted.hyper;
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.message = e.what();
  }
  return row;
}

std::vector<double> StudyResult::mean_correlation(Estimator estimator, std::span<const double> distances) const {
  std::vector<double> out(distances.size(), 0.0);
  int used = 0;
  for (const ReplicateResult& r : rows) {
    if (!r.ok || r.estimator != estimator) continue;
    for (std::size_t k = 0; k < distances.size(); ++k) out[k] += correlation(family, r.hyper.rho(), distances[k]);
    ++used;
  }
  if (used == 0) throw NumericalError("no successful replicate to average");
  for (double& v : out) v /= used;
  return out;
}

StudyResult run_study(const StudyOptions& options) {
  options.scenario.validate();
  if (options.estimators.empty()) throw UsageError("study needs at least one estimator");
  const ScenarioConfig& config = options.scenario;
  const GrfSampler sampler(config);
  const int R = config.replicates;
  const int E = static_cast<int>(options.estimators.size());

  StudyResult result;
  result.scenario = config;
  result.family = options.family;
  result.rows.resize(static_cast<std::size_t>(R) * E);
  parallel_for(R, resolve_threads(options.threads), [&](int r) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    SimulatedDataset data;
    try {
      data = simulate_dataset(config, sampler, seed);
    } catch (const std::exception& e) {
      for (int k = 0; k < E; ++k) {
        ReplicateResult& row = result.rows[r * E + k];
        row = ReplicateResult{r, seed, options.estimators[k], false, e.what(), {}, {}};
      }
      return;
    }
    for (int k = 0; k < E; ++k) {
      ReplicateResult row = run_replicate(data, config, options.estimators[k], options.family, options.fit,
                                          options.draws, options.grid_error, seed);
      row.replicate = r;
      result.rows[r * E + k] = std::move(row);
    }
  });

  for (Estimator estimator : options.estimators) {
    StudySummary s;
    s.estimator = estimator;
    int ok = 0;
    for (const ReplicateResult& r : result.rows) {
      if (r.estimator != estimator) continue;
      ++s.replicates;
      if (!r.ok) {
        ++s.failures;
        continue;
      }
      ++ok;
      s.mean.spatial.rmse += r.score.spatial.rmse;
      s.mean.spatial.coverage += r.score.spatial.coverage;
      s.mean.intensity.rmse += r.score.intensity.rmse;
      s.mean.intensity.coverage += r.score.intensity.coverage;
      s.mean.area_mean.rmse += r.score.area_mean.rmse;
      s.mean.area_mean.coverage += r.score.area_mean.coverage;
      s.mean.fit_seconds += r.score.fit_seconds;
      s.mean_rho += r.hyper.rho();
    }
    if (ok > 0) {
      for (MetricScore* m : {&s.mean.spatial, &s.mean.intensity, &s.mean.area_mean}) {
        m->rmse /= ok;
        m->coverage /= ok;
      }
      s.mean.fit_seconds /= ok;
      s.mean_rho /= ok;
    }
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace geodisagg
