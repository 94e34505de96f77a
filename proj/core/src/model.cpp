#include "geodisagg/model.hpp"

#include <algorithm>
#include <cmath>

#include "geodisagg/error.hpp"

namespace geodisagg {

void PriorSpec::validate() const {
  if (!(zeta > 0.0 && nu > 0.0 && a_delta > 0.0 && b_delta > 0.0)) {
    throw DomainError("prior parameters zeta, nu, a_delta, b_delta must be strictly positive");
  }
}

void ModelSpec::validate() const {
  priors.validate();
  for (const SmoothTerm& term : smooth_covariates) term.basis.validate();
  if (knots < 0) throw DomainError("knot count must be positive (or 0 for the default)");
  if (!(nugget >= 0.0) || !(ridge >= 0.0)) throw DomainError("nugget and ridge must be nonnegative");
}

int default_knot_count(int n_areas) { return std::min(350, 2 * n_areas); }

std::vector<std::string> ParameterLayout::penalty_names(const std::vector<SmoothTerm>& smooth) const {
  std::vector<std::string> names;
  for (const SmoothTerm& term : smooth) names.push_back("smooth_" + term.covariate);
  names.emplace_back("spatial");
  if (eps_size > 0) names.emplace_back("area");
  return names;
}

namespace {

CoordinateScaling coordinate_scaling(const DisaggregationProblem& problem) {
  CoordinateScaling s;
  const auto& cells = problem.cells();
  if (cells.empty()) return s;
  double sx = 0.0;
  double sy = 0.0;
  for (const GridCell& c : cells) {
    sx += c.center.x;
    sy += c.center.y;
  }
  s.mean_x = sx / cells.size();
  s.mean_y = sy / cells.size();
  double vx = 0.0;
  double vy = 0.0;
  for (const GridCell& c : cells) {
    vx += (c.center.x - s.mean_x) * (c.center.x - s.mean_x);
    vy += (c.center.y - s.mean_y) * (c.center.y - s.mean_y);
  }
  s.sd_x = vx > 0.0 ? std::sqrt(vx / cells.size()) : 1.0;
  s.sd_y = vy > 0.0 ? std::sqrt(vy / cells.size()) : 1.0;
  return s;
}

int require_covariate(const DisaggregationProblem& problem, const std::string& name) {
  const int idx = problem.covariate_index(name);
  if (idx < 0) throw StructuralError("model references missing covariate '" + name + "'");
  return idx;
}

}  // namespace

ModelStructure::ModelStructure(std::shared_ptr<const DisaggregationProblem> problem, ModelSpec spec,
                               KnotSet knots)
    : problem_(std::move(problem)), spec_(std::move(spec)), knots_(std::move(knots)) {
  spec_.validate();
  if (knots_.size() < 1) throw DomainError("model needs at least one knot");
  const DisaggregationProblem& prob = *problem_;

  for (const std::string& name : spec_.linear_covariates) linear_index_.push_back(require_covariate(prob, name));
  for (const SmoothTerm& term : spec_.smooth_covariates) {
    const int idx = require_covariate(prob, term.covariate);
    smooth_index_.push_back(idx);
    std::vector<double> values;
    values.reserve(prob.cells().size());
    for (const GridCell& c : prob.cells()) values.push_back(c.covariates[idx]);
    SplineDomain domain = SplineDomain::covering(values);
    if (!(domain.hi > domain.lo)) {
      throw DomainError("smooth covariate '" + term.covariate + "' is constant over the grid");
    }
    domains_.push_back(domain);
  }

  int offset = 1 + static_cast<int>(linear_index_.size()) + (spec_.coordinate_trend ? 2 : 0);
  layout_.beta_size = offset;
  for (const SmoothTerm& term : spec_.smooth_covariates) {
    layout_.theta_offset.push_back(offset);
    layout_.theta_size.push_back(term.basis.K);
    offset += term.basis.K;
  }
  layout_.u_offset = offset;
  layout_.u_size = knots_.size();
  offset += layout_.u_size;
  layout_.eps_offset = offset;
  layout_.eps_size = spec_.area_effects ? prob.n() : 0;
  layout_.dim = offset + layout_.eps_size;

  scaling_ = coordinate_scaling(prob);

  std::vector<int> stacked_cells;
  stacked_cells.reserve(prob.N());
  for (const StackedRow& r : prob.rows()) stacked_cells.push_back(r.cell);
  stacked_fixed_ = fixed_rows(stacked_cells);
  knot_distances_ = distance_matrix(prob.stacked_points(), knots_.knots);

  exact_weights_ = stacked_weights(prob, Estimator::exact, Weighting::population);
  area_population_ = area_populations(prob);
  G_ = build_G(prob, spec_.estimator, spec_.weighting);
  counts_ = prob.counts();
  if (spec_.estimator == Estimator::approximate) {
    for (int i = 0; i < prob.n(); ++i) {
      if (!(area_population_[i] > 0.0)) {
        throw StructuralError("area " + std::to_string(prob.areas()[i].id) +
                              " has zero population; the approximate estimator needs m_i > 0");
      }
    }
    A2_ = build_A2(prob, spec_.weighting);
    aggregated_fixed_ = A2_ * stacked_fixed_;
  } else {
    try {
      A2_ = build_A2(prob, spec_.weighting);
    } catch (const StructuralError&) {
      // Only needed for cross-estimator diagnostics.
    }
  }

  for (const SmoothTerm& term : spec_.smooth_covariates) {
    penalties_.push_back(difference_penalty(term.basis.K, term.basis.penalty_order));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(penalties_.back(), Eigen::EigenvaluesOnly);
    penalty_eigenvalues_.push_back(eig.eigenvalues().cwiseMax(0.0));
  }
}

Eigen::MatrixXd ModelStructure::fixed_rows(std::span<const int> cell_indices, int* clamped) const {
  const DisaggregationProblem& prob = *problem_;
  const int p = static_cast<int>(linear_index_.size());
  Eigen::MatrixXd F(cell_indices.size(), layout_.u_offset);
  for (std::size_t r = 0; r < cell_indices.size(); ++r) {
    const GridCell& cell = prob.cells()[cell_indices[r]];
    F(r, 0) = 1.0;
    for (int k = 0; k < p; ++k) F(r, 1 + k) = cell.covariates[linear_index_[k]];
    if (spec_.coordinate_trend) {
      F(r, 1 + p) = (cell.center.x - scaling_.mean_x) / scaling_.sd_x;
      F(r, 2 + p) = (cell.center.y - scaling_.mean_y) / scaling_.sd_y;
    }
  }
  int total_clamped = 0;
  for (std::size_t j = 0; j < smooth_index_.size(); ++j) {
    std::vector<double> values;
    values.reserve(cell_indices.size());
    for (int c : cell_indices) values.push_back(prob.cells()[c].covariates[smooth_index_[j]]);
    int n_clamped = 0;
    F.middleCols(layout_.theta_offset[j], layout_.theta_size[j]) =
        bspline_basis(values, spec_.smooth_covariates[j].basis, domains_[j], &n_clamped);
    total_clamped += n_clamped;
  }
  if (clamped) *clamped = total_clamped;
  return F;
}

AssembledModel::AssembledModel(std::shared_ptr<const ModelStructure> structure, double rho)
    : structure_(std::move(structure)), rho_(rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("rho must be positive and finite");
  const ModelStructure& s = *structure_;
  const DisaggregationProblem& prob = s.problem();
  const ParameterLayout& layout = s.layout();
  const CorrelationFamily family = s.spec().family;

  const Eigen::MatrixXd phi = correlation_matrix(family, rho, s.knot_distances());
  if (s.spec().estimator == Estimator::exact) {
    design_.resize(prob.N(), layout.dense_size());
    design_.leftCols(layout.u_offset) = s.stacked_fixed();
    design_.rightCols(layout.u_size) = phi;
    row_area_.resize(prob.N());
    for (int l = 0; l < prob.N(); ++l) row_area_[l] = layout.eps_size > 0 ? prob.rows()[l].area : -1;
  } else {
    design_.resize(prob.n(), layout.dense_size());
    design_.leftCols(layout.u_offset) = s.aggregated_fixed();
    design_.rightCols(layout.u_size) = s.A2() * phi;
    row_area_.resize(prob.n());
    for (int i = 0; i < prob.n(); ++i) row_area_[i] = layout.eps_size > 0 ? i : -1;
  }

  omega_ = knot_precision(s.knots(), rho, family);
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_knot_precision(omega_, s.spec().nugget);
  omega_nugget_ = omega_;
  omega_nugget_.diagonal().array() += s.spec().nugget;
  log_det_omega_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd AssembledModel::linear_predictor(const Eigen::VectorXd& xi) const {
  const ParameterLayout& layout = this->layout();
  Eigen::VectorXd eta = design_ * xi.head(layout.dense_size());
  if (layout.eps_size > 0) {
    for (Eigen::Index r = 0; r < eta.size(); ++r) eta[r] += xi[layout.eps_offset + row_area_[r]];
  }
  return eta;
}

Eigen::VectorXd AssembledModel::stacked_linear_predictor(const Eigen::VectorXd& xi) const {
  if (estimator() == Estimator::exact) return linear_predictor(xi);
  const ModelStructure& s = *structure_;
  const ParameterLayout& layout = s.layout();
  const Eigen::MatrixXd phi = correlation_matrix(s.spec().family, rho_, s.knot_distances());
  Eigen::VectorXd eta = s.stacked_fixed() * xi.head(layout.u_offset) + phi * xi.segment(layout.u_offset, layout.u_size);
  if (layout.eps_size > 0) {
    for (int l = 0; l < s.problem().N(); ++l) eta[l] += xi[layout.eps_offset + s.problem().rows()[l].area];
  }
  return eta;
}

Eigen::MatrixXd AssembledModel::precision(const Eigen::VectorXd& lambda) const {
  const ModelStructure& s = *structure_;
  const ParameterLayout& layout = s.layout();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(layout.dim, layout.dim);
  Q.topLeftCorner(layout.beta_size, layout.beta_size).diagonal().setConstant(s.spec().priors.zeta);
  for (int j = 0; j < layout.smooth_count(); ++j) {
    auto block = Q.block(layout.theta_offset[j], layout.theta_offset[j], layout.theta_size[j], layout.theta_size[j]);
    block = lambda[j] * s.penalties()[j];
    block.diagonal().array() += s.spec().ridge;
  }
  Q.block(layout.u_offset, layout.u_offset, layout.u_size, layout.u_size) =
      lambda[layout.spatial_penalty()] * omega_nugget_;
  if (layout.eps_size > 0) {
    Q.block(layout.eps_offset, layout.eps_offset, layout.eps_size, layout.eps_size).diagonal() =
        lambda[layout.spatial_penalty() + 1] * s.G();
  }
  return Q;
}

double AssembledModel::log_det_precision(const Eigen::VectorXd& lambda) const {
  const ModelStructure& s = *structure_;
  const ParameterLayout& layout = s.layout();
  double out = layout.beta_size * std::log(s.spec().priors.zeta);
  for (int j = 0; j < layout.smooth_count(); ++j) {
    out += (lambda[j] * s.penalty_eigenvalues()[j].array() + s.spec().ridge).log().sum();
  }
  out += layout.u_size * std::log(lambda[layout.spatial_penalty()]) + log_det_omega_;
  if (layout.eps_size > 0) {
    out += layout.eps_size * std::log(lambda[layout.spatial_penalty() + 1]) + s.G().array().log().sum();
  }
  return out;
}

Eigen::VectorXd AssembledModel::precision_times(const Eigen::VectorXd& xi, const Eigen::VectorXd& lambda) const {
  const ModelStructure& s = *structure_;
  const ParameterLayout& layout = s.layout();
  Eigen::VectorXd out(layout.dim);
  out.head(layout.beta_size) = s.spec().priors.zeta * xi.head(layout.beta_size);
  for (int j = 0; j < layout.smooth_count(); ++j) {
    const auto theta = xi.segment(layout.theta_offset[j], layout.theta_size[j]);
    out.segment(layout.theta_offset[j], layout.theta_size[j]) =
        lambda[j] * (s.penalties()[j] * theta) + s.spec().ridge * theta;
  }
  out.segment(layout.u_offset, layout.u_size) =
      lambda[layout.spatial_penalty()] * (omega_nugget_ * xi.segment(layout.u_offset, layout.u_size));
  if (layout.eps_size > 0) {
    out.tail(layout.eps_size) =
        lambda[layout.spatial_penalty() + 1] * s.G().cwiseProduct(xi.tail(layout.eps_size));
  }
  return out;
}

double AssembledModel::quadratic_form(const Eigen::VectorXd& xi, const Eigen::VectorXd& lambda) const {
  return xi.dot(precision_times(xi, lambda));
}

KnotSet default_knots(const DisaggregationProblem& problem, const ModelSpec& spec) {
  const int S = spec.knots > 0 ? spec.knots : default_knot_count(problem.n());
  const std::vector<Point> centers = problem.cell_centers();
  const std::vector<Point> pool = knot_candidates(centers, spec.knot_seed);
  return select_knots(pool, std::min<int>(S, static_cast<int>(pool.size())), spec.knot_seed);
}

AssembledModel assemble(std::shared_ptr<const DisaggregationProblem> problem, const ModelSpec& spec,
                        double rho) {
  KnotSet knots = default_knots(*problem, spec);
  auto structure = std::make_shared<const ModelStructure>(std::move(problem), spec, std::move(knots));
  return AssembledModel(std::move(structure), rho);
}

AssembledModel assemble(const DisaggregationProblem& problem, const ModelSpec& spec, double rho) {
  return assemble(std::make_shared<const DisaggregationProblem>(problem), spec, rho);
}

double capped_exp(double eta, bool* capped) {
  if (eta > kLinearPredictorCap || eta < -kLinearPredictorCap) {
    if (capped) *capped = true;
    eta = std::clamp(eta, -kLinearPredictorCap, kLinearPredictorCap);
  }
  return std::exp(eta);
}

Eigen::VectorXd mean_exact(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped) {
  const ModelStructure& s = model.structure();
  const DisaggregationProblem& prob = s.problem();
  const Eigen::VectorXd eta = model.stacked_linear_predictor(xi);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(prob.n());
  for (int l = 0; l < prob.N(); ++l) mu[prob.rows()[l].area] += s.exact_weights()[l] * capped_exp(eta[l], capped);
  return mu;
}

Eigen::VectorXd mean_approx(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped) {
  const ModelStructure& s = model.structure();
  Eigen::VectorXd eta;
  if (model.estimator() == Estimator::approximate) {
    eta = model.linear_predictor(xi);
  } else {
    if (s.A2().rows() != s.problem().n()) {
      throw StructuralError("approximate mean needs positive area weights for every area");
    }
    eta = s.A2() * model.stacked_linear_predictor(xi);
  }
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu[i] = s.area_population()[i] * capped_exp(eta[i], capped);
  }
  return mu;
}

Eigen::VectorXd mean(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped) {
  return model.estimator() == Estimator::exact ? mean_exact(model, xi, capped) : mean_approx(model, xi, capped);
}

}  // namespace geodisagg
