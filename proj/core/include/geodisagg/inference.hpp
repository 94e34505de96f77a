#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geodisagg/model.hpp"

namespace geodisagg {

/// Log-scale hyperparameters: log lambda_1..lambda_{q+2} and log rho.
struct Hyperparameters {
  Eigen::VectorXd log_lambda;
  double log_rho = 0.0;

  Eigen::VectorXd lambda() const { return log_lambda.array().exp(); }
  double rho() const { return std::exp(log_rho); }
};

struct LaplaceOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-9;
  int max_halvings = 40;
  bool compute_covariance = true;
};

/// Gaussian approximation N(mode, covariance) of p(xi | lambda, rho, y).
struct LaplaceFit {
  Eigen::VectorXd mode;
  Eigen::MatrixXd covariance;      // inverse negative Hessian (empty unless requested)
  Eigen::MatrixXd neg_hessian;     // -H at the mode
  double log_likelihood = 0.0;     // sum y log mu - mu at the mode
  double quadratic = 0.0;          // mode' Q mode
  double log_det_precision = 0.0;  // log |Q|
  double log_det_neg_hessian = 0.0;
  double objective = 0.0;          // log conditional posterior at the mode
  double max_abs_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  bool capped = false;             // linear predictor hit the +-50 cap
};

/// sum_i y_i log mu_i - mu_i; -inf when some mu_i = 0 with y_i > 0.
double log_likelihood(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped = nullptr);

/// log L(xi) - xi' Q xi / 2 (xi-independent constants dropped).
double log_conditional_posterior(const AssembledModel& model, const Eigen::VectorXd& xi,
                                 const Eigen::VectorXd& lambda);

struct Derivatives {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Analytic gradient and Hessian of log_conditional_posterior. With `expected`
/// set, the exact-estimator Hessian uses the Fisher form (y replaced by mu),
/// which is always negative definite.
Derivatives gradient_and_hessian(const AssembledModel& model, const Eigen::VectorXd& xi,
                                 const Eigen::VectorXd& lambda, bool expected = false);

/// Damped Newton with step halving. Throws NumericalError when -H is not
/// positive definite at the final point.
LaplaceFit laplace_mode(const AssembledModel& model, const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& start = {}, const LaplaceOptions& options = {});

/// Marginal prior density of a penalty after integrating out delta:
/// lambda | delta ~ Gamma(nu/2, nu delta/2), delta ~ Gamma(a, b).
double log_penalty_prior(double lambda, const PriorSpec& priors);
/// Same prior expressed for v = log lambda (adds the Jacobian v).
double log_penalty_prior_of_log(double v, const PriorSpec& priors);

struct HyperposteriorEvaluation {
  double value = -std::numeric_limits<double>::infinity();
  LaplaceFit fit;
  bool ok = false;
  std::string message;
};

/// Laplace-approximated log p(v, v_rho | y) up to the Poisson constant:
///   log L(mode) - mode'Q mode/2 + log|Q|/2 - log|-H|/2 + sum_j log p(v_j) + log p(v_rho).
/// `model` is rebuilt at exp(v_rho) when its rho differs.
HyperposteriorEvaluation evaluate_hyperposterior(const AssembledModel& model, const Hyperparameters& hyper,
                                                 const Eigen::VectorXd& start = {},
                                                 const LaplaceOptions& options = {});
double log_hyperposterior(const AssembledModel& model, const Hyperparameters& hyper);

struct FitOptions {
  int restarts = 25;
  std::uint64_t seed = 1;
  int max_evaluations = 400;
  double tolerance = 1e-6;
  double initial_step = 1.0;
  // log rho is searched over the initial bracket widened by this much on each
  // side. Ranges far below the knot spacing turn the field into per-knot spikes.
  double log_rho_margin = 0.0;
  int threads = 1;
  LaplaceOptions laplace;
};

struct RestartRecord {
  int index = 0;
  double initial_log_rho = 0.0;
  double objective = -std::numeric_limits<double>::infinity();
  Hyperparameters hyper;
  int evaluations = 0;
  bool converged = false;
  bool ok = false;
  std::string message;
};

struct FittedModel {
  std::shared_ptr<const ModelStructure> structure;
  Hyperparameters hyper;
  LaplaceFit laplace;
  std::vector<RestartRecord> restarts;
  int best_restart = -1;
  double domain_diameter = 0.0;

  /// Model assembled at the selected rho.
  AssembledModel model() const { return AssembledModel(structure, hyper.rho()); }
  double objective() const { return restarts.at(best_restart).objective; }
};

/// [log(1/D), log(100/D)] bracket for initial log rho.
std::pair<double, double> initial_log_rho_bracket(double diameter);

FittedModel fit(std::shared_ptr<const DisaggregationProblem> problem, const ModelSpec& spec,
                const FitOptions& options = {});
FittedModel fit(std::shared_ptr<const ModelStructure> structure, const FitOptions& options = {});

/// Laplace fit at fixed, already-selected hyperparameters (e.g. read back from a fit report).
/// `start` warm-starts the inner Newton (e.g. with a stored mode).
FittedModel refit_at(std::shared_ptr<const ModelStructure> structure, const Hyperparameters& hyper,
                     const LaplaceOptions& options = {}, const Eigen::VectorXd& start = {});

}  // namespace geodisagg
