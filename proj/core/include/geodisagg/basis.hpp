#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geodisagg/geometry.hpp"

namespace geodisagg {

enum class CorrelationFamily { exponential, matern32, spherical, circular };

CorrelationFamily parse_family(std::string_view name);
std::string to_string(CorrelationFamily family);

/// R_rho(d). rho is the inverse range; throws DomainError for rho <= 0 or d < 0.
double correlation(CorrelationFamily family, double rho, double d);

/// Elementwise correlation of a distance matrix.
Eigen::MatrixXd correlation_matrix(CorrelationFamily family, double rho, const Eigen::MatrixXd& distances);

struct SplineBasisSpec {
  int K = 15;
  int degree = 3;
  int penalty_order = 2;

  /// K = df + penalty_order, cubic.
  static SplineBasisSpec from_df(int df, int penalty_order = 2);
  void validate() const;
};

struct SplineDomain {
  double lo = 0.0;
  double hi = 1.0;

  /// Observed range widened by 1% of its width on each side.
  static SplineDomain covering(std::span<const double> values);
};

struct KnotSet {
  std::vector<Point> knots;
  std::uint64_t selection_seed = 0;

  int size() const { return static_cast<int>(knots.size()); }
};

/// Maximin space-filling subset: greedy farthest-point seeding, then swaps of
/// an endpoint of the closest pair while that raises the minimum distance.
KnotSet select_knots(std::span<const Point> candidates, int S, std::uint64_t seed);

/// Candidate pool for select_knots: all distinct points when there are at most
/// `max_candidates`, otherwise a seeded uniform subsample of that size.
std::vector<Point> knot_candidates(std::span<const Point> points, std::uint64_t seed,
                                   std::size_t max_candidates = 5000);

double min_pairwise_distance(std::span<const Point> points);

/// |points| x |knots| distance matrix.
Eigen::MatrixXd distance_matrix(std::span<const Point> points, std::span<const Point> knots);

/// Phi(rho): entry (l, s) = R_rho(|point_l - knot_s|).
Eigen::MatrixXd spatial_basis(std::span<const Point> points, const KnotSet& knots, double rho,
                              CorrelationFamily family);

/// Omega_rho: knot-to-knot correlations (unit diagonal, no nugget).
Eigen::MatrixXd knot_precision(const KnotSet& knots, double rho, CorrelationFamily family);

/// Cholesky of Omega + nugget * I. Throws NumericalError with the smallest eigenvalue on failure.
Eigen::LLT<Eigen::MatrixXd> factor_knot_precision(const Eigen::MatrixXd& omega, double nugget);

/// |values| x K B-spline design on an open uniform knot vector over `domain`.
/// Values outside the domain are clamped; `clamped` receives how many were.
Eigen::MatrixXd bspline_basis(std::span<const double> values, const SplineBasisSpec& spec,
                              const SplineDomain& domain, int* clamped = nullptr);

/// D^T D for the order-th difference matrix D ((K - order) x K).
Eigen::MatrixXd difference_penalty(int K, int order);

}  // namespace geodisagg
