// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "geodisagg/parallel.hpp"
#include "geodisagg/sim.hpp"
#include "geodisagg_cli/cli.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace geodisagg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

constexpr CorrelationFamily kFamilies[] = {CorrelationFamily::exponential, CorrelationFamily::matern32,
                                           CorrelationFamily::spherical, CorrelationFamily::circular};

// 1. Analytic gradient vs central differences, relative 1e-5, under a minute.
Outcome gradient_correctness() {
  constexpr double kTolerance = 1e-5, kStep = 1e-5;
  const auto start = std::chrono::steady_clock::now();
  auto problem = testing::tiled_problem(12, 3, 101);
  std::mt19937_64 rng(102);
  double worst = 0.0;
  int checks = 0;
  for (Estimator e : {Estimator::exact, Estimator::approximate})
    for (CorrelationFamily f : kFamilies)
      for (int q : {0, 1}) {
        ModelSpec spec;
        spec.estimator = e;
        spec.family = f;
        spec.knots = 10;
        spec.linear_covariates = {"x1"};
        if (q == 1) spec.smooth_covariates = {SmoothTerm{"x1", SplineBasisSpec{8, 3, 2}}};
        AssembledModel m = assemble(problem, spec, 0.2);
        for (int point = 0; point < 20; ++point) {
          Eigen::VectorXd xi = testing::random_vector(m.layout().dim, rng, 0.3);
          Eigen::VectorXd lambda = testing::random_vector(m.layout().penalty_count(), rng, 1.5).array().exp();
          const Eigen::VectorXd g = gradient_and_hessian(m, xi, lambda).gradient;
          Eigen::VectorXd fd(xi.size());
          for (Eigen::Index k = 0; k < xi.size(); ++k) {
            Eigen::VectorXd a = xi, b = xi;
            a[k] += kStep;
            b[k] -= kStep;
            fd[k] = (log_conditional_posterior(m, a, lambda) - log_conditional_posterior(m, b, lambda)) / (2 * kStep);
          }
          worst = std::max(worst, (fd - g).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff()));
          ++checks;
        }
      }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= kTolerance && seconds < 60.0,
          fmt("%d points, max relative error %.2e (tol %.0e), %.1f s", checks, worst, kTolerance, seconds)};
}

// 2. Laplace mode and hyperposterior vs a brute-force oracle on the tiny instance.
Outcome laplace_oracle() {
  constexpr double kModeTolerance = 1e-6, kRelative = 5e-2;
  const auto start = std::chrono::steady_clock::now();
  double mode_error = 0.0, value_error = 0.0, value_rel = 0.0;
  for (Estimator e : {Estimator::exact, Estimator::approximate}) {
    testing::TinyInstance t;
    AssembledModel m = assemble(t.problem(), t.spec(e), t.rho);
    t.set_knot(m.structure().knots().knots[0].x);
    Hyperparameters h;
    h.log_lambda = Eigen::VectorXd::Constant(1, std::log(t.lambda));
    h.log_rho = std::log(t.rho);
    HyperposteriorEvaluation ev = evaluate_hyperposterior(m, h);
    if (!ev.ok) return {false, "Laplace fit failed: " + ev.message};
    mode_error = std::max(mode_error, (ev.fit.mode - t.mode()).cwiseAbs().maxCoeff());
    const double reference = t.log_hyperposterior_quadrature(m.structure().spec().priors);
    // Relative error of the marginal density itself: |exp(laplace - quadrature) - 1|.
    value_error = std::max(value_error, std::abs(std::expm1(ev.value - reference)));
    value_rel = std::max(value_rel, std::abs((ev.value - reference) / reference));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {mode_error <= kModeTolerance && value_error <= kRelative && seconds < 60.0,
          fmt("mode error %.2e (tol %.0e), hyperposterior density relative error %.2e (tol %.0e; log-value "
              "relative %.2e), %.2f s",
              mode_error, kModeTolerance, value_error, kRelative, value_rel, seconds)};
}

// 3. Exact and approximate estimators coincide on single-cell areas.
Outcome estimator_coincidence() {
  constexpr double kTolerance = 1e-8;
  const auto start = std::chrono::steady_clock::now();
  auto problem = testing::tiled_problem(10, 1, 103);
  ModelSpec spec;
  spec.knots = 12;
  spec.linear_covariates = {"x1"};
  spec.smooth_covariates = {SmoothTerm{"x1", SplineBasisSpec{8, 3, 2}}};
  spec.estimator = Estimator::exact;
  AssembledModel ex = assemble(problem, spec, 0.3);
  spec.estimator = Estimator::approximate;
  AssembledModel ap = assemble(problem, spec, 0.3);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a)); };
  auto rel_vec = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
  };

  std::mt19937_64 rng(104);
  double objective = 0.0, gradient = 0.0, mode = 0.0, prediction = 0.0;
  Eigen::VectorXd lambda = Eigen::VectorXd::Constant(ex.layout().penalty_count(), 3.0);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd xi = testing::random_vector(ex.layout().dim, rng, 0.3);
    objective = std::max(objective, rel(log_conditional_posterior(ex, xi, lambda), log_conditional_posterior(ap, xi, lambda)));
    gradient = std::max(gradient, rel_vec(gradient_and_hessian(ex, xi, lambda).gradient,
                                          gradient_and_hessian(ap, xi, lambda).gradient));
  }
  LaplaceFit fe = laplace_mode(ex, lambda), fa = laplace_mode(ap, lambda);
  mode = rel_vec(fe.mode, fa.mode);
  // Predictions from the same draws.
  PosteriorDraws draws = sample_posterior(fe, 500, 105);
  GridPrediction ge = predict_grid(ex, draws, 0.1), ga = predict_grid(ap, draws, 0.1);
  for (std::size_t c = 0; c < ge.intensity.size(); ++c) {
    prediction = std::max({prediction, rel(ge.intensity[c].median, ga.intensity[c].median),
                           rel(ge.intensity[c].lower, ga.intensity[c].lower),
                           rel(ge.intensity[c].upper, ga.intensity[c].upper), std::abs(ge.exceedance[c] - ga.exceedance[c])});
  }
  const auto target = training_membership(*problem);
  Eigen::MatrixXd me = area_mean_draws(ex, draws, target), ma = area_mean_draws(ap, draws, target);
  prediction = std::max(prediction, (me - ma).cwiseAbs().maxCoeff() / std::max(1.0, me.cwiseAbs().maxCoeff()));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double worst = std::max({objective, gradient, mode, prediction});
  return {worst <= kTolerance && seconds < 60.0,
          fmt("objective %.1e, gradient %.1e, mode %.1e, predictions %.1e (tol %.0e), %.2f s", objective, gradient,
              mode, prediction, kTolerance, seconds)};
}

StudyResult study(char scenario, int area_size, int replicates) {
  StudyOptions o;
  o.scenario = ScenarioConfig::scenario(scenario, area_size);
  o.scenario.replicates = replicates;
  o.estimators = {Estimator::approximate};
  o.family = CorrelationFamily::matern32;
  o.draws = 2000;
  o.grid_error = true;
  o.threads = 0;
  return run_study(o);
}

std::string study_line(const StudySummary& s) {
  return fmt("%d/%d fits ok, spatial RMSE %.3f cov %.3f, intensity RMSE %.4f cov %.3f, area RMSE %.3f cov %.3f",
             s.replicates - s.failures, s.replicates, s.mean.spatial.rmse, s.mean.spatial.coverage,
             s.mean.intensity.rmse, s.mean.intensity.coverage, s.mean.area_mean.rmse, s.mean.area_mean.coverage);
}

double mean_fit_seconds(const StudyResult& r) {
  double total = 0.0;
  int n = 0;
  for (const auto& row : r.rows)
    if (row.ok) {
      total += row.score.fit_seconds;
      ++n;
    }
  return n ? total / n : 0.0;
}

// 4. Scenario (a), 25 areas of 20 x 20, 20 replicates.
Outcome table1_scenario_a() {
  const StudyResult r = study('a', 20, 20);
  const StudySummary& s = r.summary.at(0);
  const bool pass = s.replicates > s.failures && s.mean.spatial.rmse >= 0.6 && s.mean.spatial.rmse <= 1.0 &&
                    s.mean.intensity.coverage >= 0.80 && s.mean.area_mean.rmse >= 2.0 && s.mean.area_mean.rmse <= 4.5;
  return {pass, study_line(s) +
                    fmt("; need spatial RMSE in [0.6, 1.0], intensity cov >= 0.80, area RMSE in [2.0, 4.5]; %.1f s/fit",
                        mean_fit_seconds(r))};
}

// 5 and 6. Scenario (b), 100 areas of 10 x 10, 10 replicates.
std::pair<Outcome, Outcome> table1_scenario_b() {
  const StudyResult r = study('b', 10, 10);
  const StudySummary& s = r.summary.at(0);
  Outcome five{s.replicates > s.failures && s.mean.spatial.rmse >= 0.35 && s.mean.spatial.rmse <= 0.75 &&
                   s.mean.intensity.coverage >= 0.90,
               study_line(s) + fmt("; need spatial RMSE in [0.35, 0.75], intensity cov >= 0.90; %.1f s/fit",
                                   mean_fit_seconds(r))};

  Outcome six;
  if (s.replicates == s.failures) return {five, {false, "no successful fit"}};
  std::vector<double> d;
  for (int k = 0; k <= 60; ++k) d.push_back(0.5 * k);
  const std::vector<double> fitted = r.mean_correlation(Estimator::approximate, d);
  double worst = 0.0, at = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double gap = std::abs(fitted[k] - matern_nu1(d[k], r.scenario.range, r.scenario.scale));
    if (gap > worst) {
      worst = gap;
      at = d[k];
    }
  }
  six = {worst <= 0.2, fmt("max |mean fitted - true| = %.3f at d = %.1f over [0, 30] (tol 0.2); fitted R(10) = %.3f "
                           "vs true %.3f",
                           worst, at, fitted[20], matern_nu1(10.0, r.scenario.range, r.scenario.scale))};
  return {five, six};
}

// 7. Posterior-predictive coverage of held-out 4 x 4 sub-area counts.
Outcome predictive_coverage() {
  const auto start = std::chrono::steady_clock::now();
  ScenarioConfig config = ScenarioConfig::scenario('a', 10);
  const std::uint64_t seed = derive_seed(config.seed, 0);
  const SimulatedDataset data = simulate_dataset(config, seed);
  const ReplicateSeeds seeds = replicate_seeds(seed);
  ModelSpec spec = simulation_model(config, Estimator::approximate, CorrelationFamily::matern32);
  spec.knot_seed = seeds.knots;
  FitOptions options;
  options.seed = seeds.fit;
  const FittedModel fitted = fit(data.problem, spec, options);
  const AssembledModel model = fitted.model();
  const PosteriorDraws draws = sample_posterior(fitted.laplace, 2000, derive_seed(seeds.predict, 1));
  const GridError error = fitted_grid_error(fitted, derive_seed(seeds.predict, 2));

  const std::vector<AreaMembership> target = square_tiling(config.domain, 4);
  const AreaPrediction pred = aggregate_areas(model, draws, target, derive_seed(seeds.predict, 3), error);
  std::vector<std::int64_t> held_out(pred.area_ids.size(), 0);
  std::vector<double> true_mean(pred.area_ids.size(), 0.0);
  for (const AreaMembership& m : target) {
    held_out[m.area_id] += data.truth.cell_counts[m.cell_id];
    true_mean[m.area_id] += data.truth.intensity[m.cell_id];
  }
  int covered = 0, oracle_covered = 0;
  for (std::size_t a = 0; a < pred.area_ids.size(); ++a) {
    const std::int64_t y = held_out[pred.area_ids[a]];
    if (pred.predictive[a].lower <= y && y <= pred.predictive[a].upper) ++covered;
    // Reference: exact 2.5/97.5% Poisson quantiles at the true sub-area mean.
    const double mu = true_mean[pred.area_ids[a]];
    std::int64_t lo = -1, hi = -1, k = 0;
    for (double term = std::exp(-mu), cdf = term; hi < 0; ++k, term *= mu / k, cdf += term) {
      if (lo < 0 && cdf >= 0.025) lo = k;
      if (cdf >= 0.975) hi = k;
    }
    if (lo <= y && y <= hi) ++oracle_covered;
  }
  const double coverage = static_cast<double>(covered) / pred.area_ids.size();
  const double oracle = static_cast<double>(oracle_covered) / pred.area_ids.size();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {coverage >= 0.90 && coverage <= 0.99 && seconds < 300.0,
          fmt("%d/%zu sub-areas covered = %.4f (need [0.90, 0.99]); true-intensity Poisson intervals cover %.4f; "
              "%.1f s",
              covered, pred.area_ids.size(), coverage, oracle, seconds)};
}

// 8. Every command rerun with the same config and seed writes identical bytes.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "geodisagg_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "run.cfg";
  std::ofstream(cfg) << "sim.domain=40\nsim.area_size=10\nsim.knots=20\nsim.seed=17\nsim.replicates=2\n"
                        "fit.restarts=5\npredict.draws=500\npredict.threshold=0.05\n";
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
  };
  for (const std::string tag : {"first", "second"}) {
    const fs::path dir = root / tag;
    const std::string threads = tag == "first" ? "1" : "2";
    const std::string sim = (dir / "sim").string();
    const std::string common_inputs[] = {"--cells", sim + "/cells.csv", "--membership", sim + "/membership.csv",
                                         "--areas", sim + "/areas.csv"};
    std::vector<std::vector<std::string>> commands{
        {"simulate", "--config", cfg.string(), "--threads", threads, "--out", sim},
        {"fit", "--config", sim + "/fit.cfg", "--threads", threads, "--out", (dir / "fit").string()},
        {"predict", "--config", sim + "/fit.cfg", "--fit", (dir / "fit").string(), "--out", (dir / "pred").string()},
        {"score", "--predictions", (dir / "pred").string(), "--truth", sim, "--out", (dir / "score").string()}};
    for (int c = 1; c <= 2; ++c) commands[c].insert(commands[c].end(), std::begin(common_inputs), std::end(common_inputs));
    for (const auto& args : commands)
      if (int status = run(args); status != 0) return {false, args[0] + " exited with " + std::to_string(status)};
  }
  int files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(root / "first")) {
    if (!entry.is_regular_file()) continue;
    const fs::path other = root / "second" / fs::relative(entry.path(), root / "first");
    ++files;
    std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    if (!b || sa.str() != sb.str()) {
      ++differing;
      if (first_diff.empty()) first_diff = fs::relative(entry.path(), root / "first").string();
    }
  }
  return {files > 0 && differing == 0,
          fmt("%d output files compared across two runs (1 vs 2 threads), %d differ%s", files, differing,
              first_diff.empty() ? "" : (" e.g. " + first_diff).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  auto wanted = [&](int c) { return selected.empty() || selected.count(c); };

  int failures = 0;
  auto report = [&](int criterion, const char* name, const Outcome& o) {
    std::printf("criterion %d %-34s %s  %s\n", criterion, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("error: ") + e.what()};
    }
  };

  if (wanted(1)) report(1, "gradient correctness", guarded(gradient_correctness));
  if (wanted(2)) report(2, "Laplace oracle", guarded(laplace_oracle));
  if (wanted(3)) report(3, "estimator coincidence", guarded(estimator_coincidence));
  if (wanted(4)) report(4, "scenario (a) Area 3 envelope", guarded(table1_scenario_a));
  if (wanted(5) || wanted(6)) {
    std::pair<Outcome, Outcome> b;
    try {
      b = table1_scenario_b();
    } catch (const std::exception& e) {
      b.first = b.second = Outcome{false, std::string("error: ") + e.what()};
    }
    if (wanted(5)) report(5, "scenario (b) Area 2 envelope", b.first);
    if (wanted(6)) report(6, "correlation recovery", b.second);
  }
  if (wanted(7)) report(7, "posterior-predictive coverage", guarded(predictive_coverage));
  if (wanted(8)) report(8, "determinism", guarded(determinism));
  return failures == 0 ? 0 : 1;
}
