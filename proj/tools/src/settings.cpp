#include "geodisagg_cli/settings.hpp"

#include <functional>
#include <map>
#include <sstream>

#include "geodisagg/error.hpp"

namespace geodisagg::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

std::string estimator_name(Estimator e) { return e == Estimator::exact ? "exact" : "approximate"; }

Estimator parse_estimator(const std::string& name) {
  if (name == "exact") return Estimator::exact;
  if (name == "approximate") return Estimator::approximate;
  throw UsageError("unknown estimator '" + name + "' (expected exact or approximate)");
}

Weighting parse_weighting(const std::string& name) {
  if (name == "population") return Weighting::population;
  if (name == "uniform") return Weighting::uniform;
  throw UsageError("unknown weighting '" + name + "' (expected population or uniform)");
}

void apply_config(const KeyValueConfig& config, RunSettings& s) {
  // Smooth-term basis settings apply to every smooth covariate.
  SplineBasisSpec basis;
  std::vector<std::string> smooth;
  bool smooth_set = false;
  int df = 0;
  if (!s.model.smooth_covariates.empty()) basis = s.model.smooth_covariates.front().basis;
  for (const auto& term : s.model.smooth_covariates) smooth.push_back(term.covariate);

  using Setter = std::function<void(const std::string& key)>;
  const auto d = [&](const std::string& k) { return config.get_double(k, 0.0); };
  const auto i = [&](const std::string& k) { return static_cast<int>(config.get_int(k, 0)); };
  const auto u = [&](const std::string& k) { return config.get_unsigned(k, 0); };
  const auto str = [&](const std::string& k) { return config.get(k, ""); };
  const auto b = [&](const std::string& k) { return config.get_bool(k, false); };

  const std::map<std::string, Setter> setters{
      {"data.cells", [&](auto& k) { s.cells = str(k); }},
      {"data.membership", [&](auto& k) { s.membership = str(k); }},
      {"data.areas", [&](auto& k) { s.areas = str(k); }},
      {"data.target", [&](auto& k) { s.target = str(k); }},
      {"model.linear", [&](auto& k) { s.model.linear_covariates = split_list(str(k)); }},
      {"model.smooth", [&](auto& k) { smooth = split_list(str(k)); smooth_set = true; }},
      {"model.family", [&](auto& k) { s.model.family = parse_family(str(k)); }},
      {"model.knots", [&](auto& k) { s.model.knots = i(k); }},
      {"model.knot_seed", [&](auto& k) { s.model.knot_seed = u(k); }},
      {"model.estimator", [&](auto& k) { s.model.estimator = parse_estimator(str(k)); }},
      {"model.weighting", [&](auto& k) { s.model.weighting = parse_weighting(str(k)); }},
      {"model.nugget", [&](auto& k) { s.model.nugget = d(k); }},
      {"model.ridge", [&](auto& k) { s.model.ridge = d(k); }},
      {"model.coordinate_trend", [&](auto& k) { s.model.coordinate_trend = b(k); }},
      {"model.area_effects", [&](auto& k) { s.model.area_effects = b(k); }},
      {"spline.K", [&](auto& k) { basis.K = i(k); smooth_set = true; }},
      {"spline.df", [&](auto& k) { df = i(k); smooth_set = true; }},
      {"spline.degree", [&](auto& k) { basis.degree = i(k); smooth_set = true; }},
      {"spline.penalty_order", [&](auto& k) { basis.penalty_order = i(k); smooth_set = true; }},
      {"prior.zeta", [&](auto& k) { s.model.priors.zeta = d(k); }},
      {"prior.nu", [&](auto& k) { s.model.priors.nu = d(k); }},
      {"prior.a", [&](auto& k) { s.model.priors.a_delta = d(k); }},
      {"prior.b", [&](auto& k) { s.model.priors.b_delta = d(k); }},
      {"fit.restarts", [&](auto& k) { s.fit.restarts = i(k); }},
      {"fit.seed", [&](auto& k) { s.fit.seed = u(k); }},
      {"fit.max_evaluations", [&](auto& k) { s.fit.max_evaluations = i(k); }},
      {"fit.tolerance", [&](auto& k) { s.fit.tolerance = d(k); }},
      {"fit.initial_step", [&](auto& k) { s.fit.initial_step = d(k); }},
      {"fit.log_rho_margin", [&](auto& k) { s.fit.log_rho_margin = d(k); }},
      {"predict.draws", [&](auto& k) { s.draws = i(k); }},
      {"predict.threshold", [&](auto& k) { s.threshold = d(k); }},
      {"predict.seed", [&](auto& k) { s.predict_seed = u(k); }},
      {"predict.grid_error", [&](auto& k) { s.grid_error = b(k); }},
      {"sim.domain", [&](auto& k) { s.scenario.domain = i(k); }},
      {"sim.variance", [&](auto& k) { s.scenario.variance = d(k); }},
      {"sim.range", [&](auto& k) { s.scenario.range = d(k); }},
      {"sim.scale", [&](auto& k) { s.scenario.scale = parse_matern_scale(str(k)); }},
      {"sim.beta0", [&](auto& k) { s.scenario.beta0 = d(k); }},
      {"sim.beta1", [&](auto& k) { s.scenario.beta1 = d(k); }},
      {"sim.covariate_max", [&](auto& k) { s.scenario.covariate_max = d(k); }},
      {"sim.area_size", [&](auto& k) { s.scenario.area_size = i(k); }},
      {"sim.knots", [&](auto& k) { s.scenario.knots = i(k); }},
      {"sim.replicates", [&](auto& k) { s.scenario.replicates = i(k); }},
      {"sim.seed", [&](auto& k) { s.scenario.seed = u(k); }},
      {"run.threads", [&](auto& k) { s.threads = i(k); }},
  };
  for (const auto& [key, value] : config.values) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw InputError(config.source, config.lines.at(key), 0, "unknown key '" + key + "'");
    }
    it->second(key);
  }
  if (df > 0) {
    if (config.has("spline.K")) throw InputError(config.source, config.lines.at("spline.df"), 0, "give spline.df or spline.K, not both");
    basis.K = SplineBasisSpec::from_df(df, basis.penalty_order).K;
  }
  if (smooth_set) {
    s.model.smooth_covariates.clear();
    for (const auto& name : smooth) s.model.smooth_covariates.push_back({name, basis});
  }
}

KeyValueConfig model_config(const ModelSpec& spec) {
  KeyValueConfig c;
  auto put = [&](const std::string& k, const std::string& v) { c.values[k] = v; };
  std::vector<std::string> smooth;
  for (const auto& term : spec.smooth_covariates) smooth.push_back(term.covariate);
  put("model.linear", join(spec.linear_covariates));
  put("model.smooth", join(smooth));
  put("model.family", to_string(spec.family));
  put("model.knots", std::to_string(spec.knots));
  put("model.knot_seed", std::to_string(spec.knot_seed));
  put("model.estimator", estimator_name(spec.estimator));
  put("model.weighting", spec.weighting == Weighting::population ? "population" : "uniform");
  put("model.nugget", format_number(spec.nugget));
  put("model.ridge", format_number(spec.ridge));
  put("model.coordinate_trend", spec.coordinate_trend ? "true" : "false");
  put("model.area_effects", spec.area_effects ? "true" : "false");
  const SplineBasisSpec basis = spec.smooth_covariates.empty() ? SplineBasisSpec{} : spec.smooth_covariates[0].basis;
  put("spline.K", std::to_string(basis.K));
  put("spline.degree", std::to_string(basis.degree));
  put("spline.penalty_order", std::to_string(basis.penalty_order));
  put("prior.zeta", format_number(spec.priors.zeta));
  put("prior.nu", format_number(spec.priors.nu));
  put("prior.a", format_number(spec.priors.a_delta));
  put("prior.b", format_number(spec.priors.b_delta));
  int line = 0;
  for (const auto& [k, v] : c.values) c.lines[k] = ++line;
  return c;
}

}  // namespace geodisagg::cli
