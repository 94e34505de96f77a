#include "geodisagg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "geodisagg/error.hpp"
#include "geodisagg/parallel.hpp"
#include "geodisagg/simplex.hpp"

namespace geodisagg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Per-row exponentials. Approximate: mu_r = m_r exp(eta_r). Exact: kappa_l = (a m)_l exp(eta_l)
/// and mu_i = sum over area i.
struct RowMeans {
  Eigen::VectorXd kappa;  // per design row
  Eigen::VectorXd mu;     // per area
  bool capped = false;
};

RowMeans row_means(const AssembledModel& model, const Eigen::VectorXd& xi) {
  const ModelStructure& s = model.structure();
  const Eigen::VectorXd eta = model.linear_predictor(xi);
  RowMeans out;
  out.kappa.resize(eta.size());
  if (model.estimator() == Estimator::approximate) {
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      out.kappa[r] = s.area_population()[r] * capped_exp(eta[r], &out.capped);
    }
    out.mu = out.kappa;
  } else {
    const DisaggregationProblem& prob = s.problem();
    out.mu = Eigen::VectorXd::Zero(prob.n());
    for (Eigen::Index l = 0; l < eta.size(); ++l) {
      out.kappa[l] = s.exact_weights()[l] * capped_exp(eta[l], &out.capped);
      out.mu[prob.rows()[l].area] += out.kappa[l];
    }
  }
  return out;
}

/// Likelihood area of each design row.
inline int likelihood_area(const AssembledModel& model, Eigen::Index r) {
  return model.estimator() == Estimator::approximate ? static_cast<int>(r)
                                                     : model.structure().problem().rows()[r].area;
}

double poisson_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0) {
      if (!(mu[i] > 0.0)) return kNegInf;
      ll += y[i] * std::log(mu[i]);
    }
    ll -= mu[i];
  }
  return ll;
}

/// out += C^T v for the structured design (dense block plus one eps entry per row).
void add_transpose_times(const AssembledModel& model, const Eigen::VectorXd& v, Eigen::VectorXd& out) {
  const ParameterLayout& layout = model.layout();
  out.head(layout.dense_size()).noalias() += model.design().transpose() * v;
  if (layout.eps_size > 0) {
    for (Eigen::Index r = 0; r < v.size(); ++r) out[layout.eps_offset + model.row_area()[r]] += v[r];
  }
}

/// H += sum_r w_r c_r c_r^T.
void add_weighted_gram(const AssembledModel& model, const Eigen::VectorXd& w, Eigen::MatrixXd& H) {
  const ParameterLayout& layout = model.layout();
  const Eigen::MatrixXd& F = model.design();
  const int f = layout.dense_size();
  const Eigen::MatrixXd WF = F.array().colwise() * w.array();
  H.topLeftCorner(f, f).noalias() += F.transpose() * WF;
  if (layout.eps_size > 0) {
    for (Eigen::Index r = 0; r < F.rows(); ++r) {
      const int e = layout.eps_offset + model.row_area()[r];
      H.col(e).head(f) += WF.row(r).transpose();
      H(e, e) += w[r];
    }
    H.block(layout.eps_offset, 0, layout.eps_size, f) = H.block(0, layout.eps_offset, f, layout.eps_size).transpose();
  }
}

}  // namespace

double log_likelihood(const AssembledModel& model, const Eigen::VectorXd& xi, bool* capped) {
  const RowMeans rm = row_means(model, xi);
  if (capped && rm.capped) *capped = true;
  return poisson_log_likelihood(model.structure().counts(), rm.mu);
}

double log_conditional_posterior(const AssembledModel& model, const Eigen::VectorXd& xi,
                                 const Eigen::VectorXd& lambda) {
  if (xi.size() != model.layout().dim) throw DomainError("parameter vector has the wrong length");
  const double ll = log_likelihood(model, xi);
  if (ll == kNegInf) return kNegInf;
  return ll - 0.5 * model.quadratic_form(xi, lambda);
}

Derivatives gradient_and_hessian(const AssembledModel& model, const Eigen::VectorXd& xi,
                                 const Eigen::VectorXd& lambda, bool expected) {
  const ParameterLayout& layout = model.layout();
  if (xi.size() != layout.dim) throw DomainError("parameter vector has the wrong length");
  const Eigen::VectorXd& y = model.structure().counts();
  const RowMeans rm = row_means(model, xi);

  Derivatives d;
  d.gradient = -model.precision_times(xi, lambda);
  d.hessian = -model.precision(lambda);

  if (model.estimator() == Estimator::approximate) {
    add_transpose_times(model, y - rm.mu, d.gradient);
    add_weighted_gram(model, -rm.mu, d.hessian);
  } else {
    const int n = model.structure().problem().n();
    for (int i = 0; i < n; ++i) {
      if (!(rm.mu[i] > 0.0)) throw NumericalError("area mean is zero; derivatives undefined");
    }
    const Eigen::VectorXd t = (y.array() / rm.mu.array() - 1.0).matrix();
    const Eigen::Index R = rm.kappa.size();
    Eigen::VectorXd v(R);
    for (Eigen::Index l = 0; l < R; ++l) v[l] = t[likelihood_area(model, l)] * rm.kappa[l];
    add_transpose_times(model, v, d.gradient);
    if (!expected) add_weighted_gram(model, v, d.hessian);

    // D: column i is d mu_i / d xi.
    const int f = layout.dense_size();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(layout.dim, n);
    for (Eigen::Index l = 0; l < R; ++l) {
      const int i = likelihood_area(model, l);
      D.col(i).head(f) += rm.kappa[l] * model.design().row(l).transpose();
      if (layout.eps_size > 0) D(layout.eps_offset + model.row_area()[l], i) += rm.kappa[l];
    }
    const Eigen::VectorXd scale =
        expected ? Eigen::VectorXd(rm.mu.cwiseInverse()) : Eigen::VectorXd(y.array() / rm.mu.array().square());
    d.hessian.noalias() -= D * scale.asDiagonal() * D.transpose();
  }
  if (!d.gradient.allFinite() || !d.hessian.allFinite()) {
    throw NumericalError("non-finite gradient or Hessian");
  }
  return d;
}

LaplaceFit laplace_mode(const AssembledModel& model, const Eigen::VectorXd& lambda, const Eigen::VectorXd& start,
                        const LaplaceOptions& options) {
  const int dim = model.layout().dim;
  Eigen::VectorXd xi = start.size() == dim ? start : Eigen::VectorXd::Zero(dim);
  if (!xi.allFinite()) throw DomainError("Newton start must be finite");

  LaplaceFit fit;
  double f = log_conditional_posterior(model, xi, lambda);
  if (!std::isfinite(f)) throw NumericalError("log posterior is not finite at the Newton start");

  for (int it = 0; it < options.max_iterations; ++it) {
    Derivatives d = gradient_and_hessian(model, xi, lambda);
    fit.max_abs_gradient = d.gradient.cwiseAbs().maxCoeff();
    if (fit.max_abs_gradient < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(-d.hessian);
    if (llt.info() != Eigen::Success) {
      // Observed Hessian of the exact estimator can be indefinite away from the mode.
      d = gradient_and_hessian(model, xi, lambda, true);
      llt.compute(-d.hessian);
      if (llt.info() != Eigen::Success) throw NumericalError("Newton system is not positive definite");
    }
    const Eigen::VectorXd step = llt.solve(d.gradient);

    double scale = 1.0;
    bool accepted = false;
    double f_new = f;
    Eigen::VectorXd xi_new;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      xi_new = xi + scale * step;
      f_new = log_conditional_posterior(model, xi_new, lambda);
      if (std::isfinite(f_new) && f_new >= f) {
        accepted = true;
        break;
      }
    }
    fit.iterations = it + 1;
    if (!accepted) {
      // No representable ascent left along the Newton direction.
      fit.converged = true;
      break;
    }
    const double change = std::abs(f_new - f) / std::max(1.0, std::abs(f));
    xi = xi_new;
    f = f_new;
    if (scale == 1.0 && change < options.relative_tolerance) {
      fit.converged = true;
      break;
    }
  }

  const Derivatives d = gradient_and_hessian(model, xi, lambda);
  fit.max_abs_gradient = d.gradient.cwiseAbs().maxCoeff();
  fit.neg_hessian = -d.hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(fit.neg_hessian);
  if (llt.info() != Eigen::Success) {
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.neg_hessian, Eigen::EigenvaluesOnly).eigenvalues();
    throw NumericalError("negative Hessian at the mode is not positive definite (eigenvalue range [" +
                         std::to_string(ev.minCoeff()) + ", " + std::to_string(ev.maxCoeff()) + "])");
  }
  fit.log_det_neg_hessian = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (options.compute_covariance) {
    fit.covariance = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  }
  fit.mode = xi;
  fit.log_likelihood = log_likelihood(model, xi, &fit.capped);
  fit.quadratic = model.quadratic_form(xi, lambda);
  fit.log_det_precision = model.log_det_precision(lambda);
  fit.objective = fit.log_likelihood - 0.5 * fit.quadratic;
  return fit;
}

double log_penalty_prior(double lambda, const PriorSpec& priors) {
  if (!(lambda > 0.0)) return kNegInf;
  const double half_nu = 0.5 * priors.nu;
  const double a = priors.a_delta;
  const double b = priors.b_delta;
  const double log_norm = half_nu * std::log(half_nu) + a * std::log(b) + std::lgamma(a + half_nu) -
                          std::lgamma(half_nu) - std::lgamma(a);
  return log_norm + (half_nu - 1.0) * std::log(lambda) - (a + half_nu) * std::log(b + half_nu * lambda);
}

double log_penalty_prior_of_log(double v, const PriorSpec& priors) {
  return log_penalty_prior(std::exp(v), priors) + v;
}

HyperposteriorEvaluation evaluate_hyperposterior(const AssembledModel& model, const Hyperparameters& hyper,
                                                 const Eigen::VectorXd& start, const LaplaceOptions& options) {
  HyperposteriorEvaluation out;
  const ParameterLayout& layout = model.layout();
  if (hyper.log_lambda.size() != layout.penalty_count()) {
    throw DomainError("expected " + std::to_string(layout.penalty_count()) + " log penalties");
  }
  if (!hyper.log_lambda.allFinite() || !std::isfinite(hyper.log_rho)) {
    out.message = "non-finite hyperparameters";
    return out;
  }
  try {
    const double rho = hyper.rho();
    std::optional<AssembledModel> rebuilt;
    if (model.rho() != rho) rebuilt.emplace(model.at_rho(rho));
    const AssembledModel& at = rebuilt ? *rebuilt : model;
    const Eigen::VectorXd lambda = hyper.lambda();
    out.fit = laplace_mode(at, lambda, start, options);
    if (!out.fit.converged) {
      out.message = "inner Newton did not converge";
      return out;
    }
    if (out.fit.capped) {
      out.message = "linear predictor at the cap";
      return out;
    }
    const PriorSpec& priors = model.structure().spec().priors;
    double value = out.fit.log_likelihood - 0.5 * out.fit.quadratic + 0.5 * out.fit.log_det_precision -
                   0.5 * out.fit.log_det_neg_hessian;
    for (Eigen::Index j = 0; j < hyper.log_lambda.size(); ++j) {
      value += log_penalty_prior_of_log(hyper.log_lambda[j], priors);
    }
    value += log_penalty_prior_of_log(hyper.log_rho, priors);
    if (!std::isfinite(value)) {
      out.message = "non-finite hyperposterior";
      return out;
    }
    out.value = value;
    out.ok = true;
  } catch (const Error& e) {
    out.message = e.what();
  }
  return out;
}

double log_hyperposterior(const AssembledModel& model, const Hyperparameters& hyper) {
  LaplaceOptions options;
  options.compute_covariance = false;
  return evaluate_hyperposterior(model, hyper, {}, options).value;
}

std::pair<double, double> initial_log_rho_bracket(double diameter) {
  const double D = diameter > 0.0 ? diameter : 1.0;
  return {std::log(1.0 / D), std::log(100.0 / D)};
}

namespace {

struct RestartOutcome {
  RestartRecord record;
  Eigen::VectorXd best_mode;
};

RestartOutcome run_restart(const std::shared_ptr<const ModelStructure>& structure, const FitOptions& options,
                           double diameter, int index) {
  const ParameterLayout& layout = structure->layout();
  const int k = layout.penalty_count();
  const auto [lo, hi] = initial_log_rho_bracket(diameter);
  // Search box; points outside are rejected as +inf.
  const double rho_lo = lo - options.log_rho_margin;
  const double rho_hi = hi + options.log_rho_margin;
  constexpr double kLogLambdaBound = 25.0;

  std::mt19937_64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> draw(lo, hi);

  RestartOutcome out;
  out.record.index = index;
  out.record.initial_log_rho = draw(rng);

  LaplaceOptions inner = options.laplace;
  inner.compute_covariance = false;

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(k + 1);
  x0[k] = out.record.initial_log_rho;

  std::optional<AssembledModel> current;
  Eigen::VectorXd warm;
  double best_value = kNegInf;
  std::string last_error;

  auto objective = [&](const Eigen::VectorXd& x) -> double {
    if (x.head(k).cwiseAbs().maxCoeff() > kLogLambdaBound || x[k] < rho_lo || x[k] > rho_hi) {
      return std::numeric_limits<double>::infinity();
    }
    Hyperparameters h{x.head(k), x[k]};
    try {
      if (!current || current->rho() != h.rho()) current.emplace(structure, h.rho());
    } catch (const Error& e) {
      last_error = e.what();
      return std::numeric_limits<double>::infinity();
    }
    HyperposteriorEvaluation ev = evaluate_hyperposterior(*current, h, warm, inner);
    if (!ev.ok) {
      last_error = ev.message;
      return std::numeric_limits<double>::infinity();
    }
    warm = ev.fit.mode;
    if (ev.value > best_value) {
      best_value = ev.value;
      out.record.hyper = h;
      out.best_mode = ev.fit.mode;
    }
    return -ev.value;
  };

  SimplexOptions simplex;
  simplex.max_evaluations = options.max_evaluations;
  simplex.tolerance = options.tolerance;
  simplex.initial_step = options.initial_step;
  const SimplexResult result = nelder_mead(objective, x0, simplex);

  out.record.evaluations = result.evaluations;
  out.record.converged = result.converged;
  out.record.ok = std::isfinite(best_value);
  out.record.objective = best_value;
  out.record.message = out.record.ok ? (result.converged ? "converged" : "evaluation limit") : last_error;
  return out;
}

}  // namespace

FittedModel fit(std::shared_ptr<const DisaggregationProblem> problem, const ModelSpec& spec,
                const FitOptions& options) {
  KnotSet knots = default_knots(*problem, spec);
  auto structure = std::make_shared<const ModelStructure>(std::move(problem), spec, std::move(knots));
  return fit(std::move(structure), options);
}

FittedModel fit(std::shared_ptr<const ModelStructure> structure, const FitOptions& options) {
  if (options.restarts < 1) throw DomainError("at least one restart is required");
  FittedModel fitted;
  fitted.structure = structure;
  fitted.domain_diameter = domain_diameter(structure->problem());

  std::vector<RestartOutcome> outcomes(options.restarts);
  parallel_for(options.restarts, options.threads, [&](int r) {
    outcomes[r] = run_restart(structure, options, fitted.domain_diameter, r);
  });

  int best = -1;
  for (int r = 0; r < options.restarts; ++r) {
    fitted.restarts.push_back(outcomes[r].record);
    if (outcomes[r].record.ok && (best < 0 || outcomes[r].record.objective > outcomes[best].record.objective)) {
      best = r;
    }
  }
  if (best < 0) {
    std::string detail;
    for (const RestartRecord& rec : fitted.restarts) {
      detail += "\n  restart " + std::to_string(rec.index) + ": " + rec.message;
    }
    throw NumericalError("all " + std::to_string(options.restarts) + " restarts failed:" + detail);
  }
  fitted.best_restart = best;
  fitted.hyper = outcomes[best].record.hyper;

  LaplaceOptions final_options = options.laplace;
  final_options.compute_covariance = true;
  fitted.laplace = laplace_mode(fitted.model(), fitted.hyper.lambda(), outcomes[best].best_mode, final_options);
  return fitted;
}

FittedModel refit_at(std::shared_ptr<const ModelStructure> structure, const Hyperparameters& hyper,
                     const LaplaceOptions& options, const Eigen::VectorXd& start) {
  FittedModel fitted;
  fitted.structure = structure;
  fitted.domain_diameter = domain_diameter(structure->problem());
  fitted.hyper = hyper;
  LaplaceOptions final_options = options;
  final_options.compute_covariance = true;
  const AssembledModel model = fitted.model();
  const HyperposteriorEvaluation ev = evaluate_hyperposterior(model, hyper, start, final_options);
  if (!ev.ok) throw NumericalError("Laplace fit at the given hyperparameters failed: " + ev.message);
  fitted.laplace = ev.fit;
  RestartRecord rec;
  rec.objective = ev.value;
  rec.hyper = hyper;
  rec.ok = true;
  rec.converged = true;
  rec.message = "fixed hyperparameters";
  fitted.restarts.push_back(rec);
  fitted.best_restart = 0;
  return fitted;
}

}  // namespace geodisagg
