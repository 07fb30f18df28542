#include <benchmark/benchmark.h>

#include <random>

#include "longimp/distributions.hpp"
#include "longimp/fcs.hpp"
#include "longimp/formula.hpp"
#include "longimp/jm.hpp"
#include "longimp/lmm.hpp"
#include "longimp/methods.hpp"
#include "longimp/simulator.hpp"
#include "longimp/tabular.hpp"

using namespace longimp;

namespace {

const Dataset& study() {
  static const Dataset d = simulate(SimConfig{}).observed;
  return d;
}

void BM_ConditionalMvn(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(p, p, [&] { return z(gen); });
  const MvnParams par{Eigen::VectorXd::Zero(p), a * a.transpose() + Eigen::MatrixXd::Identity(p, p)};
  std::vector<int> obs;
  for (int i = 0; i < p / 2; ++i) obs.push_back(i);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(obs.size()));
  for (auto _ : state) benchmark::DoNotOptimize(conditional_mvn(par, obs, x));
}
BENCHMARK(BM_ConditionalMvn)->Arg(4)->Arg(16)->Arg(64);

void BM_ReshapeLongToWide(benchmark::State& state) {
  const ReshapeMap map = infer_reshape_map(study());
  for (auto _ : state) benchmark::DoNotOptimize(reshape_long_to_wide(study(), map));
}
BENCHMARK(BM_ReshapeLongToWide)->Unit(benchmark::kMillisecond);

void BM_FitLmmThreeLevel(benchmark::State& state) {
  const Dataset d = simulate(SimConfig{}).complete;
  const ModelFormula f = parse_formula(default_formula(MethodId::Fcs3l));
  for (auto _ : state) benchmark::DoNotOptimize(fit_lmm(f, d));
}
BENCHMARK(BM_FitLmmThreeLevel)->Unit(benchmark::kMillisecond);

void BM_JmSweep(benchmark::State& state) {
  const auto id = static_cast<MethodId>(state.range(0));
  const PreparedData p = prepare_data(id, study());
  const JmSpec spec = jm_spec_for(id, p, ImputeOptions{});
  RngStream rng(3);
  JmSampler sampler(rng, spec, p.data);
  for (auto _ : state) sampler.sweep(rng);
}
BENCHMARK(BM_JmSweep)
    ->Arg(static_cast<int>(MethodId::Jm1lWide))
    ->Arg(static_cast<int>(MethodId::Jm2l))
    ->Unit(benchmark::kMillisecond);

void BM_FcsIteration(benchmark::State& state) {
  const auto id = static_cast<MethodId>(state.range(0));
  ImputeOptions opt;
  opt.m = 1;
  opt.maxit = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_method(id, study(), opt));
}
BENCHMARK(BM_FcsIteration)
    ->Arg(static_cast<int>(MethodId::Fcs1lWide))
    ->Arg(static_cast<int>(MethodId::Fcs3l))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
