#include "geodisagg_cli/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <unordered_map>

#include <CLI11.hpp>

#include "geodisagg/error.hpp"
#include "geodisagg/io.hpp"
#include "geodisagg/parallel.hpp"
#include "geodisagg/predict.hpp"
#include "geodisagg/sim.hpp"
#include "geodisagg_cli/settings.hpp"

namespace geodisagg::cli {

namespace fs = std::filesystem;

namespace {

/// Files written by one command; removed again unless the command succeeds.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const fs::path& p : written_) fs::remove(p, ec);
  }

  fs::path add(const std::string& name) {
    written_.push_back(dir_ / name);
    return written_.back();
  }
  void csv(const std::string& name, const CsvTable& table) { write_csv(add(name), table); }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool committed_ = false;
};

std::string clean_message(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string fmt(double v) { return format_number(v); }

/// k-th log penalty from the end (spatial then eps in simulation models).
std::string tail_lambda(const ReplicateResult& r, int k) {
  const Eigen::VectorXd& v = r.hyper.log_lambda;
  return r.ok && v.size() >= k ? fmt(v[v.size() - k]) : "nan";
}

void require(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError("missing " + what);
  if (!fs::exists(p)) throw UsageError(what + " '" + p.string() + "' does not exist");
}

std::vector<std::string> block_names(const ParameterLayout& layout) {
  std::vector<std::string> names(layout.dim);
  for (int k = 0; k < layout.beta_size; ++k) names[k] = "beta";
  for (int j = 0; j < layout.smooth_count(); ++j) {
    for (int k = 0; k < layout.theta_size[j]; ++k) names[layout.theta_offset[j] + k] = "theta_" + std::to_string(j + 1);
  }
  for (int k = 0; k < layout.u_size; ++k) names[layout.u_offset + k] = "u";
  for (int k = 0; k < layout.eps_size; ++k) names[layout.eps_offset + k] = "eps";
  return names;
}

// ---- fit ------------------------------------------------------------------

int command_fit(const RunSettings& s, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  require(s.cells, "cells file");
  require(s.membership, "membership file");
  require(s.areas, "areas file");
  s.model.validate();
  const auto problem = parse_inputs(s.cells, s.membership, s.areas);

  ModelSpec spec = s.model;
  if (spec.knots == 0) spec.knots = default_knot_count(problem->n());
  auto structure = std::make_shared<const ModelStructure>(problem, spec, default_knots(*problem, spec));
  FitOptions options = s.fit;
  options.threads = resolve_threads(s.threads);

  const auto start = std::chrono::steady_clock::now();
  const FittedModel fitted = fit(structure, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const ParameterLayout& layout = structure->layout();
  const auto names = layout.penalty_names(spec.smooth_covariates);

  Outputs files(out_dir);
  CsvTable report;
  report.header = {"restart", "initial_log_rho", "objective", "log_rho"};
  for (const auto& n : names) report.header.push_back("log_lambda_" + n);
  for (const char* c : {"evaluations", "converged", "ok", "selected", "message"}) report.header.emplace_back(c);
  for (const RestartRecord& r : fitted.restarts) {
    std::vector<std::string> row{std::to_string(r.index), fmt(r.initial_log_rho), r.ok ? fmt(r.objective) : "nan",
                                 r.ok ? fmt(r.hyper.log_rho) : "nan"};
    for (std::size_t k = 0; k < names.size(); ++k) row.push_back(r.ok ? fmt(r.hyper.log_lambda[k]) : "nan");
    row.push_back(std::to_string(r.evaluations));
    row.push_back(r.converged ? "1" : "0");
    row.push_back(r.ok ? "1" : "0");
    row.push_back(r.index == fitted.best_restart ? "1" : "0");
    row.push_back(clean_message(r.message));
    report.rows.push_back(std::move(row));
  }
  files.csv("fit_report.csv", report);

  CsvTable hyper;
  hyper.header = {"name", "log_value", "value"};
  for (std::size_t k = 0; k < names.size(); ++k) {
    hyper.rows.push_back({"lambda_" + names[k], fmt(fitted.hyper.log_lambda[k]), fmt(fitted.hyper.lambda()[k])});
  }
  hyper.rows.push_back({"rho", fmt(fitted.hyper.log_rho), fmt(fitted.hyper.rho())});
  files.csv("hyperparameters.csv", hyper);

  CsvTable knots;
  knots.header = {"knot_id", "x", "y"};
  for (int k = 0; k < structure->knots().size(); ++k) {
    const Point& p = structure->knots().knots[k];
    knots.rows.push_back({std::to_string(k), fmt(p.x), fmt(p.y)});
  }
  files.csv("knots.csv", knots);

  CsvTable mode;
  mode.header = {"index", "block", "value", "sd"};
  const auto blocks = block_names(layout);
  for (int k = 0; k < layout.dim; ++k) {
    mode.rows.push_back({std::to_string(k), blocks[k], fmt(fitted.laplace.mode[k]),
                         fmt(std::sqrt(fitted.laplace.covariance(k, k)))});
  }
  files.csv("mode.csv", mode);
  write_config(files.add("model.cfg"), model_config(spec));
  files.commit();

  out << "fit: " << problem->n() << " areas, " << problem->N() << " stacked cells, " << spec.knots
      << " knots; best restart " << fitted.best_restart << " log posterior " << fmt(fitted.objective()) << "\n";
  err << "fit time " << seconds << " s\n";
  return 0;
}

// ---- predict --------------------------------------------------------------

std::unordered_map<std::string, double> read_hyper_table(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const int cn = t.column("name"), cv = t.column("log_value");
  if (cn < 0 || cv < 0) throw InputError(path.string(), 1, 0, "expected columns name, log_value");
  std::unordered_map<std::string, double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out[t.rows[r][cn]] = parse_double(t.rows[r][cv], path.string(), t.line_numbers[r], cv + 1);
  }
  return out;
}

int command_predict(const RunSettings& s, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  require(s.cells, "cells file");
  require(s.membership, "membership file");
  require(s.areas, "areas file");
  require(s.fit_dir, "fit directory");
  if (s.draws < 1) throw UsageError("need at least one posterior draw");
  const auto problem = parse_inputs(s.cells, s.membership, s.areas);

  RunSettings stored;
  apply_config(read_config(s.fit_dir / "model.cfg"), stored);
  const ModelSpec spec = stored.model;
  spec.validate();

  KnotSet knots;
  knots.selection_seed = spec.knot_seed;
  {
    const fs::path path = s.fit_dir / "knots.csv";
    const CsvTable t = read_csv(path);
    const int cx = t.column("x"), cy = t.column("y");
    if (cx < 0 || cy < 0) throw InputError(path.string(), 1, 0, "expected columns x, y");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      knots.knots.push_back({parse_double(t.rows[r][cx], path.string(), t.line_numbers[r], cx + 1),
                             parse_double(t.rows[r][cy], path.string(), t.line_numbers[r], cy + 1)});
    }
  }
  auto structure = std::make_shared<const ModelStructure>(problem, spec, std::move(knots));
  const ParameterLayout& layout = structure->layout();

  const auto table = read_hyper_table(s.fit_dir / "hyperparameters.csv");
  const auto names = layout.penalty_names(spec.smooth_covariates);
  Hyperparameters hyper;
  hyper.log_lambda.resize(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = table.find("lambda_" + names[k]);
    if (it == table.end()) throw UsageError("hyperparameters.csv lacks lambda_" + names[k]);
    hyper.log_lambda[k] = it->second;
  }
  if (!table.count("rho")) throw UsageError("hyperparameters.csv lacks rho");
  hyper.log_rho = table.at("rho");

  Eigen::VectorXd start;
  if (fs::exists(s.fit_dir / "mode.csv")) {
    const fs::path path = s.fit_dir / "mode.csv";
    const CsvTable t = read_csv(path);
    const int cv = t.column("value");
    if (cv >= 0 && static_cast<int>(t.rows.size()) == layout.dim) {
      start.resize(layout.dim);
      for (int k = 0; k < layout.dim; ++k) start[k] = parse_double(t.rows[k][cv], path.string(), t.line_numbers[k], cv + 1);
    }
  }
  const FittedModel fitted = refit_at(structure, hyper, s.fit.laplace, start);
  const AssembledModel model = fitted.model();

  const PosteriorDraws draws = sample_posterior(fitted.laplace, s.draws, derive_seed(s.predict_seed, 1));
  GridError error;
  if (s.grid_error) error = fitted_grid_error(fitted, derive_seed(s.predict_seed, 2));

  const GridPrediction grid = predict_grid(model, draws, s.threshold, error);
  if (grid.clamped_values > 0) {
    err << "warning: " << grid.clamped_values << " covariate values outside the spline domain were clamped\n";
  }

  std::vector<AreaMembership> target;
  if (!s.target.empty()) {
    require(s.target, "target membership file");
    target = parse_membership(read_csv(s.target), s.target.string());
  } else {
    target = training_membership(*problem);
  }
  const AreaPrediction areas = aggregate_areas(model, draws, target, derive_seed(s.predict_seed, 3), error);

  Outputs files(out_dir);
  CsvTable g;
  g.header = {"cell_id", "intensity_median", "intensity_lower", "intensity_upper", "spatial_median",
              "spatial_lower", "spatial_upper", "exceedance"};
  for (std::size_t c = 0; c < grid.cell_ids.size(); ++c) {
    const Summary& r = grid.intensity[c];
    const Summary& sp = grid.spatial[c];
    g.rows.push_back({std::to_string(grid.cell_ids[c]), fmt(r.median), fmt(r.lower), fmt(r.upper), fmt(sp.median),
                      fmt(sp.lower), fmt(sp.upper), fmt(grid.exceedance[c])});
  }
  files.csv("grid_predictions.csv", g);

  CsvTable a;
  a.header = {"area_id", "mean_median", "mean_lower", "mean_upper", "count_median", "count_lower", "count_upper"};
  for (std::size_t i = 0; i < areas.area_ids.size(); ++i) {
    const Summary& m = areas.mean[i];
    const Summary& p = areas.predictive[i];
    a.rows.push_back({std::to_string(areas.area_ids[i]), fmt(m.median), fmt(m.lower), fmt(m.upper), fmt(p.median),
                      fmt(p.lower), fmt(p.upper)});
  }
  files.csv("area_predictions.csv", a);

  CsvTable curve;
  curve.header = {"distance", "correlation"};
  const double reach = std::max(fitted.domain_diameter, 1.0);
  std::vector<double> distances;
  for (int k = 0; k <= 100; ++k) distances.push_back(reach * k / 100.0);
  const std::vector<double> corr = correlation_curve(fitted, distances);
  for (std::size_t k = 0; k < distances.size(); ++k) curve.rows.push_back({fmt(distances[k]), fmt(corr[k])});
  files.csv("correlation_curve.csv", curve);
  files.commit();

  out << "predict: " << grid.cell_ids.size() << " cells, " << areas.area_ids.size() << " areas, " << s.draws
      << " draws\n";
  return 0;
}

// ---- simulate -------------------------------------------------------------

CsvTable truth_cells_table(const DisaggregationProblem& problem, const TruthSurface& t) {
  CsvTable out;
  out.header = {"cell_id", "spatial", "covariate", "log_intensity", "intensity", "count"};
  for (std::size_t c = 0; c < problem.cells().size(); ++c) {
    out.rows.push_back({std::to_string(problem.cells()[c].id), fmt(t.spatial[c]), fmt(t.covariate[c]),
                        fmt(t.log_intensity[c]), fmt(t.intensity[c]), std::to_string(t.cell_counts[c])});
  }
  return out;
}

CsvTable truth_areas_table(const DisaggregationProblem& problem, const TruthSurface& t) {
  CsvTable out;
  out.header = {"area_id", "mean"};
  for (int i = 0; i < problem.n(); ++i) out.rows.push_back({std::to_string(problem.areas()[i].id), fmt(t.area_mean[i])});
  return out;
}

int command_simulate(const RunSettings& s, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  ScenarioConfig config = s.scenario;
  const int replicates = config.replicates;
  if (replicates < 0) throw UsageError("replicate count must be nonnegative");
  config.replicates = std::max(1, replicates);
  config.validate();

  const GrfSampler sampler(config);
  const SimulatedDataset data = simulate_dataset(config, sampler, derive_seed(config.seed, 0));

  Outputs files(out_dir);
  files.csv("cells.csv", cells_table(*data.problem));
  files.csv("membership.csv", membership_table(*data.problem));
  files.csv("areas.csv", areas_table(*data.problem));
  files.csv("truth_cells.csv", truth_cells_table(*data.problem, data.truth));
  files.csv("truth_areas.csv", truth_areas_table(*data.problem, data.truth));
  {
    // Settings that make fit + predict on this dataset repeat study replicate 0.
    const ReplicateSeeds seeds = replicate_seeds(derive_seed(config.seed, 0));
    ModelSpec spec = simulation_model(config, s.model.estimator, s.model.family);
    spec.knot_seed = seeds.knots;
    KeyValueConfig c = model_config(spec);
    c.values["fit.seed"] = std::to_string(seeds.fit);
    c.values["predict.seed"] = std::to_string(seeds.predict);
    write_config(files.add("fit.cfg"), c);
  }

  if (replicates > 0) {
    StudyOptions options;
    options.scenario = config;
    options.estimators = {s.model.estimator};
    options.family = s.model.family;
    options.fit = s.fit;
    options.fit.threads = 1;
    options.draws = s.draws;
    options.grid_error = s.grid_error;
    options.threads = resolve_threads(s.threads);
    const StudyResult study = run_study(options);

    CsvTable rows;
    rows.header = {"replicate", "seed", "estimator", "ok", "spatial_rmse", "spatial_coverage", "intensity_rmse",
                   "intensity_coverage", "area_rmse", "area_coverage", "log_rho", "log_lambda_spatial", "log_lambda_eps",
                   "message"};
    for (const ReplicateResult& r : study.rows) {
      const ScoreReport& sc = r.score;
      rows.rows.push_back({std::to_string(r.replicate), std::to_string(r.seed), estimator_name(r.estimator),
                           r.ok ? "1" : "0", fmt(sc.spatial.rmse), fmt(sc.spatial.coverage), fmt(sc.intensity.rmse),
                           fmt(sc.intensity.coverage), fmt(sc.area_mean.rmse), fmt(sc.area_mean.coverage),
                           r.ok ? fmt(r.hyper.log_rho) : "nan", tail_lambda(r, 2), tail_lambda(r, 1),
                           clean_message(r.message)});
      if (r.ok) err << "replicate " << r.replicate << " fit time " << sc.fit_seconds << " s\n";
    }
    files.csv("study_replicates.csv", rows);

    CsvTable summary;
    summary.header = {"estimator", "replicates", "failures", "spatial_rmse", "spatial_coverage", "intensity_rmse",
                      "intensity_coverage", "area_rmse", "area_coverage", "mean_rho"};
    for (const StudySummary& m : study.summary) {
      summary.rows.push_back({estimator_name(m.estimator), std::to_string(m.replicates), std::to_string(m.failures),
                              fmt(m.mean.spatial.rmse), fmt(m.mean.spatial.coverage), fmt(m.mean.intensity.rmse),
                              fmt(m.mean.intensity.coverage), fmt(m.mean.area_mean.rmse),
                              fmt(m.mean.area_mean.coverage), fmt(m.mean_rho)});
      out << "simulate: " << estimator_name(m.estimator) << " " << m.replicates - m.failures << "/" << m.replicates
          << " replicates fitted; spatial RMSE " << fmt(m.mean.spatial.rmse) << ", intensity coverage "
          << fmt(m.mean.intensity.coverage) << ", area RMSE " << fmt(m.mean.area_mean.rmse) << "\n";
    }
    files.csv("study_summary.csv", summary);
  } else {
    out << "simulate: wrote one dataset with " << data.problem->n() << " areas\n";
  }
  files.commit();
  return 0;
}

// ---- score ----------------------------------------------------------------

/// Column triples (median, lower, upper) keyed by the id column.
std::unordered_map<int, Summary> read_summaries(const fs::path& path, const std::string& id, const std::string& prefix) {
  const CsvTable t = read_csv(path);
  const std::string name = path.string();
  const int ci = t.column(id), cm = t.column(prefix + "_median"), cl = t.column(prefix + "_lower"),
            cu = t.column(prefix + "_upper");
  if (ci < 0 || cm < 0 || cl < 0 || cu < 0) throw InputError(name, 1, 0, "missing " + prefix + " columns");
  std::unordered_map<int, Summary> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.line_numbers[r];
    out[static_cast<int>(parse_int(row[ci], name, line, ci + 1))] =
        Summary{parse_double(row[cm], name, line, cm + 1), parse_double(row[cl], name, line, cl + 1),
                parse_double(row[cu], name, line, cu + 1)};
  }
  return out;
}

MetricScore score_against(const std::unordered_map<int, Summary>& est, const fs::path& truth_path,
                          const std::string& id, const std::string& column) {
  const CsvTable t = read_csv(truth_path);
  const std::string name = truth_path.string();
  const int ci = t.column(id), cv = t.column(column);
  if (ci < 0 || cv < 0) throw InputError(name, 1, 0, "missing column " + column);
  std::vector<Summary> e;
  std::vector<double> truth;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int line = t.line_numbers[r];
    const int key = static_cast<int>(parse_int(t.rows[r][ci], name, line, ci + 1));
    const auto it = est.find(key);
    if (it == est.end()) throw InputError(name, line, ci + 1, "no prediction for " + id + " " + std::to_string(key));
    e.push_back(it->second);
    truth.push_back(parse_double(t.rows[r][cv], name, line, cv + 1));
  }
  if (e.size() != est.size()) throw DomainError("predictions and truth cover different units");
  return score_metric(e, truth);
}

int command_score(const RunSettings& s, const fs::path& out_dir, std::ostream& out) {
  require(s.predictions_dir, "predictions directory");
  require(s.truth_dir, "truth directory");
  const fs::path grid = s.predictions_dir / "grid_predictions.csv";
  const fs::path areas = s.predictions_dir / "area_predictions.csv";
  ScoreReport r;
  r.spatial = score_against(read_summaries(grid, "cell_id", "spatial"), s.truth_dir / "truth_cells.csv", "cell_id",
                            "spatial");
  r.intensity = score_against(read_summaries(grid, "cell_id", "intensity"), s.truth_dir / "truth_cells.csv",
                              "cell_id", "intensity");
  r.area_mean = score_against(read_summaries(areas, "area_id", "mean"), s.truth_dir / "truth_areas.csv", "area_id",
                              "mean");
  Outputs files(out_dir);
  CsvTable t;
  t.header = {"target", "rmse", "coverage"};
  t.rows.push_back({"spatial", fmt(r.spatial.rmse), fmt(r.spatial.coverage)});
  t.rows.push_back({"intensity", fmt(r.intensity.rmse), fmt(r.intensity.coverage)});
  t.rows.push_back({"area_mean", fmt(r.area_mean.rmse), fmt(r.area_mean.coverage)});
  files.csv("score.csv", t);
  files.commit();
  out << "score: spatial RMSE " << fmt(r.spatial.rmse) << " coverage " << fmt(r.spatial.coverage) << "; intensity RMSE "
      << fmt(r.intensity.rmse) << " coverage " << fmt(r.intensity.coverage) << "; area RMSE " << fmt(r.area_mean.rmse)
      << " coverage " << fmt(r.area_mean.coverage) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geoadditive disaggregation of area-level counts onto a grid"};
  app.require_subcommand(1);

  std::string config_path, out_dir, estimator, scenario, grid_error, matern_scale;
  std::string cells, membership, areas, fit_dir, target, predictions, truth;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, replicates, area_size, restarts, draws;
  std::optional<double> threshold;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--threads", threads, "worker threads (0: all cores)");
    sub->add_option("--estimator", estimator, "exact or approximate");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--cells", cells, "cells.csv");
    sub->add_option("--membership", membership, "membership.csv");
    sub->add_option("--areas", areas, "areas.csv");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the model and write the fit report");
  common(fit_cmd);
  inputs(fit_cmd);
  fit_cmd->add_option("--restarts", restarts, "optimizer restarts");

  CLI::App* predict_cmd = app.add_subcommand("predict", "grid and area predictions from a fit");
  common(predict_cmd);
  inputs(predict_cmd);
  predict_cmd->add_option("--fit", fit_dir, "directory written by fit")->required();
  predict_cmd->add_option("--target", target, "membership file of the areas to aggregate to");
  predict_cmd->add_option("--draws", draws, "posterior draws");
  predict_cmd->add_option("--threshold", threshold, "exceedance threshold for r(w)");
  predict_cmd->add_option("--grid-error", grid_error, "on or off");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "simulate a dataset and run the simulation study");
  common(sim_cmd);
  sim_cmd->add_option("--scenario", scenario, "a (range 3) or b (range 10)");
  sim_cmd->add_option("--area-size", area_size, "4, 10 or 20");
  sim_cmd->add_option("--replicates", replicates, "study replicates (0: dataset only)");
  sim_cmd->add_option("--restarts", restarts, "optimizer restarts per fit");
  sim_cmd->add_option("--draws", draws, "posterior draws per fit");
  sim_cmd->add_option("--matern-scale", matern_scale, "range or practical");
  sim_cmd->add_option("--grid-error", grid_error, "on or off");

  CLI::App* score_cmd = app.add_subcommand("score", "score predictions against simulated truth");
  common(score_cmd);
  score_cmd->add_option("--predictions", predictions, "directory written by predict")->required();
  score_cmd->add_option("--truth", truth, "directory written by simulate")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunSettings s;
    if (!config_path.empty()) {
      require(config_path, "config file");
      apply_config(read_config(fs::path(config_path)), s);
    }
    if (!cells.empty()) s.cells = cells;
    if (!membership.empty()) s.membership = membership;
    if (!areas.empty()) s.areas = areas;
    if (!target.empty()) s.target = target;
    s.fit_dir = fit_dir;
    s.predictions_dir = predictions;
    s.truth_dir = truth;
    if (seed) {
      s.fit.seed = *seed;
      s.predict_seed = *seed;
      s.scenario.seed = *seed;
    }
    if (threads) {
      s.threads = *threads;
    } else if (const char* env = std::getenv("GEODISAGG_THREADS")) {
      s.threads = static_cast<int>(parse_int(env, "GEODISAGG_THREADS", 0, 0));
    }
    if (!estimator.empty()) s.model.estimator = parse_estimator(estimator);
    if (restarts) s.fit.restarts = *restarts;
    if (draws) s.draws = *draws;
    if (threshold) s.threshold = *threshold;
    if (!grid_error.empty()) {
      if (grid_error != "on" && grid_error != "off") throw UsageError("--grid-error expects on or off");
      s.grid_error = grid_error == "on";
    }
    if (!scenario.empty()) {
      if (scenario.size() != 1) throw UsageError("unknown scenario '" + scenario + "' (expected a or b)");
      s.scenario.range = ScenarioConfig::scenario(scenario[0], s.scenario.area_size).range;
    }
    if (area_size) s.scenario.area_size = *area_size;
    if (replicates) s.scenario.replicates = *replicates;
    if (!matern_scale.empty()) s.scenario.scale = parse_matern_scale(matern_scale);

    const fs::path out_path(out_dir);
    if (fit_cmd->parsed()) return command_fit(s, out_path, out, err);
    if (predict_cmd->parsed()) return command_predict(s, out_path, out, err);
    if (sim_cmd->parsed()) return command_simulate(s, out_path, out, err);
    return command_score(s, out_path, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace geodisagg::cli
