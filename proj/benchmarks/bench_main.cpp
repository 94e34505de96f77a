#include <benchmark/benchmark.h>

#include "geodisagg/inference.hpp"
#include "geodisagg/predict.hpp"
#include "geodisagg/sim.hpp"
#include "support.hpp"

using namespace geodisagg;

namespace {

ModelSpec bench_spec(Estimator e) {
  ModelSpec spec;
  spec.estimator = e;
  spec.knots = 50;
  spec.linear_covariates = {"x1"};
  return spec;
}

Estimator estimator_arg(const benchmark::State& state) {
  return state.range(0) == 0 ? Estimator::exact : Estimator::approximate;
}

}  // namespace

// Model assembly on a 40 x 40 grid in 10 x 10 areas.
static void BM_Assemble(benchmark::State& state) {
  auto problem = testing::tiled_problem(40, 10, 1);
  const ModelSpec spec = bench_spec(estimator_arg(state));
  for (auto _ : state) benchmark::DoNotOptimize(assemble(problem, spec, 5.0));
}
BENCHMARK(BM_Assemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_LaplaceMode(benchmark::State& state) {
  auto problem = testing::tiled_problem(40, 10, 1);
  AssembledModel model = assemble(problem, bench_spec(estimator_arg(state)), 5.0);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(model.layout().penalty_count(), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(laplace_mode(model, lambda));
}
BENCHMARK(BM_LaplaceMode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Hyperposterior(benchmark::State& state) {
  auto problem = testing::tiled_problem(40, 10, 1);
  AssembledModel model = assemble(problem, bench_spec(estimator_arg(state)), 5.0);
  Hyperparameters h;
  h.log_lambda = Eigen::VectorXd::Constant(model.layout().penalty_count(), std::log(2.0));
  h.log_rho = std::log(5.0);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_hyperposterior(model, h));
}
BENCHMARK(BM_Hyperposterior)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Posterior sampling plus grid summaries, M draws.
static void BM_PredictGrid(benchmark::State& state) {
  auto problem = testing::tiled_problem(40, 10, 1);
  AssembledModel model = assemble(problem, bench_spec(Estimator::approximate), 5.0);
  const LaplaceFit fit = laplace_mode(model, Eigen::VectorXd::Constant(model.layout().penalty_count(), 2.0));
  const int M = static_cast<int>(state.range(0));
  for (auto _ : state) {
    PosteriorDraws draws = sample_posterior(fit, M, 7);
    benchmark::DoNotOptimize(predict_grid(model, draws, 0.1));
  }
}
BENCHMARK(BM_PredictGrid)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

// One Matern field on the 100 x 100 simulation grid.
static void BM_GrfDraw(benchmark::State& state) {
  ScenarioConfig config = ScenarioConfig::scenario('a', 20);
  GrfSampler sampler(config);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw(++seed));
}
BENCHMARK(BM_GrfDraw)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
