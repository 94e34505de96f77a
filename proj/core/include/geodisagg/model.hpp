#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geodisagg/basis.hpp"
#include "geodisagg/geometry.hpp"

namespace geodisagg {

/// Gaussian prior precision of the fixed effects (zeta) and the Gamma-Gamma
/// hyperprior controls shared by every penalty and by rho.
struct PriorSpec {
  double zeta = 1e-5;
  double nu = 3.0;
  double a_delta = 1e-5;
  double b_delta = 1e-5;

  void validate() const;
};

struct SmoothTerm {
  std::string covariate;
  SplineBasisSpec basis;
};

struct ModelSpec {
  std::vector<std::string> linear_covariates;
  std::vector<SmoothTerm> smooth_covariates;
  CorrelationFamily family = CorrelationFamily::matern32;
  int knots = 0;  // 0 selects default_knot_count(n)
  std::uint64_t knot_seed = 1;
  Estimator estimator = Estimator::approximate;
  Weighting weighting = Weighting::population;
  PriorSpec priors;
  double nugget = 1e-8;  // added to the diagonal of Omega before factorization
  double ridge = 1e-6;   // added to each lambda_j P_j block
  // Both default on. Switching them off gives the reduced models used by the
  // low-dimensional quadrature checks.
  bool coordinate_trend = true;
  bool area_effects = true;

  void validate() const;
};

/// min(350, 2n).
int default_knot_count(int n_areas);

/// Offsets of the blocks of xi = (beta, theta_1..theta_q, u, eps).
struct ParameterLayout {
  int beta_size = 0;
  std::vector<int> theta_offset;
  std::vector<int> theta_size;
  int u_offset = 0;
  int u_size = 0;
  int eps_offset = 0;
  int eps_size = 0;
  int dim = 0;

  /// Columns of the dense part of the design (everything except eps).
  int dense_size() const { return eps_offset; }
  int smooth_count() const { return static_cast<int>(theta_size.size()); }
  /// Number of lambda entries: one per smooth term, spatial, and eps when present.
  int penalty_count() const { return smooth_count() + 1 + (eps_size > 0 ? 1 : 0); }
  int spatial_penalty() const { return smooth_count(); }
  std::vector<std::string> penalty_names(const std::vector<SmoothTerm>& smooth) const;
};

struct CoordinateScaling {
  double mean_x = 0.0;
  double sd_x = 1.0;
  double mean_y = 0.0;
  double sd_y = 1.0;
};

/// Everything about a model that does not depend on rho.
class ModelStructure {
 public:
  ModelStructure(std::shared_ptr<const DisaggregationProblem> problem, ModelSpec spec, KnotSet knots);

  const DisaggregationProblem& problem() const { return *problem_; }
  std::shared_ptr<const DisaggregationProblem> problem_ptr() const { return problem_; }
  const ModelSpec& spec() const { return spec_; }
  const KnotSet& knots() const { return knots_; }
  const ParameterLayout& layout() const { return layout_; }
  const CoordinateScaling& scaling() const { return scaling_; }
  const std::vector<SplineDomain>& spline_domains() const { return domains_; }

  /// X and B columns at the stacked rows (N x (beta + theta sizes)).
  const Eigen::MatrixXd& stacked_fixed() const { return stacked_fixed_; }
  /// Stacked-row to knot distances (N x S).
  const Eigen::MatrixXd& knot_distances() const { return knot_distances_; }
  /// A2 applied to stacked_fixed (n x ...). Empty for the exact estimator.
  const Eigen::MatrixXd& aggregated_fixed() const { return aggregated_fixed_; }

  const SparseRowMatrix& A2() const { return A2_; }
  /// A1 entries per stacked row (a m).
  const Eigen::VectorXd& exact_weights() const { return exact_weights_; }
  /// m_i per area.
  const Eigen::VectorXd& area_population() const { return area_population_; }
  /// Diagonal of G for the configured estimator/weighting.
  const Eigen::VectorXd& G() const { return G_; }
  const Eigen::VectorXd& counts() const { return counts_; }

  const std::vector<Eigen::MatrixXd>& penalties() const { return penalties_; }
  const std::vector<Eigen::VectorXd>& penalty_eigenvalues() const { return penalty_eigenvalues_; }

  /// X and B rows for arbitrary cells (indices into problem().cells()), using the
  /// stored coordinate scaling and spline domains. `clamped` counts clamped covariate values.
  Eigen::MatrixXd fixed_rows(std::span<const int> cell_indices, int* clamped = nullptr) const;

 private:
  std::shared_ptr<const DisaggregationProblem> problem_;
  ModelSpec spec_;
  KnotSet knots_;
  ParameterLayout layout_;
  CoordinateScaling scaling_;
  std::vector<int> linear_index_;
  std::vector<int> smooth_index_;
  std::vector<SplineDomain> domains_;
  Eigen::MatrixXd stacked_fixed_;
  Eigen::MatrixXd knot_distances_;
  Eigen::MatrixXd aggregated_fixed_;
  SparseRowMatrix A2_;
  Eigen::VectorXd exact_weights_;
  Eigen::VectorXd area_population_;
  Eigen::VectorXd G_;
  Eigen::VectorXd counts_;
  std::vector<Eigen::MatrixXd> penalties_;
  std::vector<Eigen::VectorXd> penalty_eigenvalues_;
};

/// Model at a fixed rho: design C (exact, N rows) or A2 C (approximate, n rows)
/// stored as a dense block plus one eps entry per row, and the knot precision.
class AssembledModel {
 public:
  AssembledModel(std::shared_ptr<const ModelStructure> structure, double rho);

  /// Same structure at a different rho.
  AssembledModel at_rho(double rho) const { return AssembledModel(structure_, rho); }

  const ModelStructure& structure() const { return *structure_; }
  std::shared_ptr<const ModelStructure> structure_ptr() const { return structure_; }
  const ParameterLayout& layout() const { return structure_->layout(); }
  Estimator estimator() const { return structure_->spec().estimator; }
  double rho() const { return rho_; }

  /// Dense part of the design, one row per likelihood row.
  const Eigen::MatrixXd& design() const { return design_; }
  /// eps index of each design row, -1 when the model has no area effects.
  const std::vector<int>& row_area() const { return row_area_; }
  const Eigen::MatrixXd& omega() const { return omega_; }
  double log_det_omega() const { return log_det_omega_; }

  /// Linear predictor per design row (without the log m_i offset).
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& xi) const;
  /// Cell-level linear predictor at the stacked rows, whichever estimator is configured.
  Eigen::VectorXd stacked_linear_predictor(const Eigen::VectorXd& xi) const;

  /// Q(lambda, rho), dense.
  Eigen::MatrixXd precision(const Eigen::VectorXd& lambda) const;
  double log_det_precision(const Eigen::VectorXd& lambda) const;
  /// xi' Q xi without forming Q.
  double quadratic_form(const Eigen::VectorXd& xi, const Eigen::VectorXd& lambda) const;
  /// Q xi without forming Q.
  Eigen::VectorXd precision_times(const Eigen::VectorXd& xi, const Eigen::VectorXd& lambda) const;

 private:
  std::shared_ptr<const ModelStructure> structure_;
  double rho_;
  Eigen::MatrixXd design_;
  std::vector<int> row_area_;
  Eigen::MatrixXd omega_;
  Eigen::MatrixXd omega_nugget_;
  double log_det_omega_ = 0.0;
};

/// Knot selection over the problem's cell centers plus ModelStructure + AssembledModel.
AssembledModel assemble(const DisaggregationProblem& problem, const ModelSpec& spec, double rho);
AssembledModel assemble(std::shared_ptr<const DisaggregationProblem> problem, const ModelSpec& spec,
                        double rho);
KnotSet default_knots(const DisaggregationProblem& problem, const ModelSpec& spec);

/// Absolute cap on the linear predictor entering exp().
inline constexpr double kLinearPredictorCap = 50.0;

/// exp(min(max(eta, -cap), cap)); sets *capped when the cap was hit.
double capped_exp(double eta, bool* capped = nullptr);

/// mu = A1 exp(C xi) using cell-level predictors at the stacked rows.
Eigen::VectorXd mean_exact(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped = nullptr);
/// mu = m * exp(A2 C xi).
Eigen::VectorXd mean_approx(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped = nullptr);
/// Mean under the configured estimator.
Eigen::VectorXd mean(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped = nullptr);

}  // namespace geodisagg
