#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "geodisagg/inference.hpp"

namespace geodisagg {

/// Draws from N(mode, covariance); one row per draw.
struct PosteriorDraws {
  Eigen::MatrixXd draws;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(draws.rows()); }
};

PosteriorDraws sample_posterior(const LaplaceFit& fit, int M, std::uint64_t seed);

/// mode + L^{-T} z where L L^T is the negative Hessian at the mode.
Eigen::VectorXd draw_from_noise(const LaplaceFit& fit, const Eigen::VectorXd& z);

struct Summary {
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
};

/// Linear interpolation between order statistics. Sorts `values`.
double quantile(std::vector<double>& values, double p);
Summary summarize(std::vector<double>& values);

/// Cell-level error whose weighted area average is the area effect eps_i.
/// With variance > 0, predictions draw it per cell conditionally on each eps
/// draw, so the draw averages back to eps_i exactly. With variance 0 it is
/// left out of grid predictions.
///
/// spatial_precision > 0 adds, independently per cell, the part of the
/// full-rank field that the knots cannot represent: variance
/// (1 - phi(w)' Omega^{-1} phi(w)) / lambda_spat.
struct GridError {
  double variance = 0.0;
  std::uint64_t seed = 0;
  double spatial_precision = 0.0;

  bool active() const { return variance > 0.0 || spatial_precision > 0.0; }
};

/// 1 / lambda_eps of a fit, or 0 without area effects.
double grid_error_variance(const FittedModel& fitted);

/// Both grid error parts at the fitted hyperparameters.
GridError fitted_grid_error(const FittedModel& fitted, std::uint64_t seed);

/// 1 - phi(w)' Omega^{-1} phi(w) per row of a spatial basis block (rows x S), clamped at 0.
Eigen::VectorXd low_rank_residual(const AssembledModel& model, const Eigen::MatrixXd& phi);

/// Conditional cell-level errors (N stacked rows x M draws).
Eigen::MatrixXd grid_error_draws(const AssembledModel& model, const PosteriorDraws& draws, const GridError& error);

struct GridPrediction {
  std::vector<int> cell_ids;
  std::vector<Summary> intensity;  // r(w)
  std::vector<Summary> spatial;    // coordinate trend + kriging term
  std::vector<double> exceedance;  // P(r(w) > threshold)
  double threshold = 0.0;
  int clamped_values = 0;
};

/// Cell-level summaries for the given cells (indices into problem().cells()).
/// The area effects enter only through `error` (see GridError).
GridPrediction predict_grid(const AssembledModel& model, const PosteriorDraws& draws, std::span<const int> cells,
                            double threshold = 0.0, const GridError& error = {});
GridPrediction predict_grid(const AssembledModel& model, const PosteriorDraws& draws, double threshold = 0.0,
                            const GridError& error = {});

struct AreaPrediction {
  std::vector<int> area_ids;
  std::vector<Summary> mean;        // expected count
  std::vector<Summary> predictive;  // posterior-predictive count
};

/// Aggregates the draws onto `target` areas with the fitted estimator's formula.
/// Without grid error a target cell carries the (coverage-weighted) area effect
/// of the training areas that contain it, or none when it lies outside all of
/// them. With grid error it carries its conditional cell-level error.
AreaPrediction aggregate_areas(const AssembledModel& model, const PosteriorDraws& draws,
                               std::span<const AreaMembership> target, std::uint64_t seed,
                               const GridError& error = {});

/// Per-draw expected counts (M x |target areas|) behind aggregate_areas.
Eigen::MatrixXd area_mean_draws(const AssembledModel& model, const PosteriorDraws& draws,
                                std::span<const AreaMembership> target, std::vector<int>* area_ids = nullptr,
                                const GridError& error = {});

/// Training memberships of the model's problem in stacked order.
std::vector<AreaMembership> training_membership(const DisaggregationProblem& problem);

/// R_rho_hat(d) over `distances`.
std::vector<double> correlation_curve(const FittedModel& fitted, std::span<const double> distances);

}  // namespace geodisagg
