#pragma once

#include <functional>

#include <Eigen/Dense>

namespace geodisagg {

struct SimplexOptions {
  int max_evaluations = 400;
  /// Stop when max - min objective over the simplex is below tolerance.
  double tolerance = 1e-6;
  double initial_step = 1.0;
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead minimization. `f` may return +inf to reject a point.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          const SimplexOptions& options = {});

}  // namespace geodisagg
