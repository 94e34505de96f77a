#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geodisagg/inference.hpp"
#include "geodisagg/predict.hpp"

namespace geodisagg {

/// How the Matern nu=1 range maps onto the Bessel argument.
///   range: R(d) = (d/range) K1(d/range)
///   practical: R(d) = (k d) K1(k d) with k = sqrt(8)/range, so R(range) ~ 0.14
enum class MaternScale { range, practical };

MaternScale parse_matern_scale(std::string_view name);
std::string to_string(MaternScale scale);

/// Matern nu=1 correlation normalized to R(0) = 1.
double matern_nu1(double d, double range, MaternScale scale);

/// 350, 200 and 50 knots for area sizes 4, 10 and 20; min(350, 2n) otherwise.
int paper_knot_count(int domain, int area_size);

struct ScenarioConfig {
  int domain = 100;
  double variance = 0.7;
  double range = 3.0;
  MaternScale scale = MaternScale::range;
  double beta0 = -3.0;
  double beta1 = -1.5;
  double covariate_max = 1.5;
  int area_size = 20;
  int knots = 0;  // 0 selects paper_knot_count
  int replicates = 20;
  std::uint64_t seed = 1;

  /// 'a' (range 3) or 'b' (range 10).
  static ScenarioConfig scenario(char name, int area_size);
  int knot_count() const;
  int area_count() const { return (domain / area_size) * (domain / area_size); }
  void validate() const;
};

/// Cholesky factor of the field covariance over the unit grid, built once.
class GrfSampler {
 public:
  explicit GrfSampler(const ScenarioConfig& config);
  Eigen::VectorXd draw(std::uint64_t seed) const;
  int size() const { return size_; }

 private:
  int size_ = 0;
  bool zero_ = false;
  Eigen::MatrixXd factor_;
};

/// Field over the unit grid cells (row-major, cell id = y * domain + x).
Eigen::VectorXd simulate_grf(const ScenarioConfig& config, std::uint64_t seed);

struct TruthSurface {
  Eigen::VectorXd spatial;
  Eigen::VectorXd covariate;
  Eigen::VectorXd log_intensity;
  Eigen::VectorXd intensity;
  Eigen::VectorXd area_mean;
  /// Poisson(r) count per cell; area counts are their sums, so any other
  /// tiling of the same cells gets consistent held-out counts.
  std::vector<std::int64_t> cell_counts;
};

struct SimulatedDataset {
  std::shared_ptr<const DisaggregationProblem> problem;
  TruthSurface truth;
};

/// Smooth covariate over the grid rescaled onto [0, covariate_max].
Eigen::VectorXd simulate_covariate(const ScenarioConfig& config, std::uint64_t seed);

/// Square tiling memberships for the given tile size, area-major.
std::vector<AreaMembership> square_tiling(int domain, int tile);

SimulatedDataset simulate_dataset(const ScenarioConfig& config, std::uint64_t seed);
SimulatedDataset simulate_dataset(const ScenarioConfig& config, const GrfSampler& sampler, std::uint64_t seed);

struct MetricScore {
  double rmse = 0.0;
  double coverage = 0.0;
};

double rmse(std::span<const double> estimate, std::span<const double> truth);
MetricScore score_metric(std::span<const Summary> estimate, std::span<const double> truth);

struct ScoreReport {
  MetricScore spatial;
  MetricScore intensity;
  MetricScore area_mean;
  double fit_seconds = 0.0;
};

/// Grid predictions must cover every cell in order; area predictions every
/// training area in order.
ScoreReport score(const GridPrediction& grid, const AreaPrediction& areas, const TruthSurface& truth);

/// Model fitted to simulated data: x1 as the only linear covariate.
ModelSpec simulation_model(const ScenarioConfig& config, Estimator estimator, CorrelationFamily family);

struct StudyOptions {
  ScenarioConfig scenario;
  std::vector<Estimator> estimators{Estimator::approximate};
  CorrelationFamily family = CorrelationFamily::matern32;
  FitOptions fit;
  int draws = 2000;
  bool grid_error = true;
  int threads = 1;  // replicates in flight
};

struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::approximate;
  bool ok = false;
  std::string message;
  ScoreReport score;
  Hyperparameters hyper;
};

struct StudySummary {
  Estimator estimator = Estimator::approximate;
  int replicates = 0;
  int failures = 0;
  ScoreReport mean;
  double mean_rho = 0.0;
};

struct StudyResult {
  ScenarioConfig scenario;
  CorrelationFamily family = CorrelationFamily::matern32;
  std::vector<ReplicateResult> rows;  // replicate-major, estimators in option order
  std::vector<StudySummary> summary;

  /// Mean fitted correlation over successful replicates of `estimator`.
  std::vector<double> mean_correlation(Estimator estimator, std::span<const double> distances) const;
};

/// Seeds a replicate uses for knot selection, restarts and prediction. The
/// posterior draws, grid errors and predictive counts use derive_seed(predict, 1..3).
struct ReplicateSeeds {
  std::uint64_t knots = 0;
  std::uint64_t fit = 0;
  std::uint64_t predict = 0;
};
ReplicateSeeds replicate_seeds(std::uint64_t replicate_seed);

/// Fit one simulated dataset and score it.
ReplicateResult run_replicate(const SimulatedDataset& data, const ScenarioConfig& config, Estimator estimator,
                              CorrelationFamily family, const FitOptions& fit_options, int draws,
                              bool grid_error, std::uint64_t seed);

StudyResult run_study(const StudyOptions& options);

}  // namespace geodisagg
