#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "myotorque/eval.hpp"
#include "myotorque/filters.hpp"
#include "myotorque/gpr.hpp"
#include "myotorque/stream.hpp"
#include "myotorque/synthgen.hpp"

using namespace myotorque;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = nd(rng);
  return X;
}

void BM_GpFit(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd X = random_matrix(n, 7, 1);
  const Eigen::VectorXd y = random_matrix(n, 1, 2).col(0);
  Hyperparameters h;
  h.log_noise_variance = std::log(0.1);
  for (auto _ : state) benchmark::DoNotOptimize(fit(X, y, h));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GpFit)->RangeMultiplier(2)->Range(250, 2000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_GpPredict(benchmark::State& state) {
  const Eigen::MatrixXd X = random_matrix(2000, 7, 1);
  Hyperparameters h;
  h.log_noise_variance = std::log(0.1);
  const auto model = fit(X, random_matrix(2000, 1, 2).col(0), h);
  const Eigen::MatrixXd Xs = random_matrix(state.range(0), 7, 3);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, Xs));
}
BENCHMARK(BM_GpPredict)->Arg(1)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_HyperparameterSearch(benchmark::State& state) {
  const Eigen::MatrixXd X = random_matrix(500, 7, 1);
  const Eigen::VectorXd y = X.col(0).array().sin().matrix() + 0.1 * random_matrix(500, 1, 2).col(0);
  OptimizerOptions opts;
  opts.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_hyperparameters(X, y, opts));
}
BENCHMARK(BM_HyperparameterSearch)->Unit(benchmark::kMillisecond);

void BM_Filtfilt(benchmark::State& state) {
  const auto bp = design_butterworth_bandpass(4, 20.0, 500.0, 2000.0);
  const auto x = random_matrix(state.range(0), 1, 4);
  const std::vector<double> v(x.data(), x.data() + x.size());
  for (auto _ : state) benchmark::DoNotOptimize(filtfilt(bp, v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Filtfilt)->Arg(2000)->Arg(40000)->Unit(benchmark::kMicrosecond);

void BM_BuildFeatures(benchmark::State& state) {
  const auto spec = default_session_spec(Joint::knee);
  const auto session = generate_session(spec);
  const auto calib = compute_calibration(session.calibration.standing, session.calibration.initial_angle);
  const auto config = static_cast<ModelConfig>(state.range(0));
  const auto& take = session.takes.front().recording;
  for (auto _ : state) benchmark::DoNotOptimize(build_features(take, Joint::knee, config, calib));
  state.SetLabel(std::string(to_string(config)));
}
BENCHMARK(BM_BuildFeatures)
    ->Arg(static_cast<int>(ModelConfig::baseline))
    ->Arg(static_cast<int>(ModelConfig::emg))
    ->Arg(static_cast<int>(ModelConfig::fmg))
    ->Unit(benchmark::kMillisecond);

// One 200 Hz frame through a model trained on the full row cap.
void BM_StreamPush(benchmark::State& state) {
  FeatureTable t;
  t.joint = Joint::knee;
  t.config = ModelConfig::fmg;
  t.column_names = feature_columns(t.joint, t.config);
  t.rows = random_matrix(2000, 7, 5);
  t.targets = t.rows.col(0) + 0.1 * random_matrix(2000, 1, 6).col(0);
  GpOptions opts;
  opts.optimizer.restarts = 1;
  opts.optimize_cap = 200;
  StreamEstimator est(ModelBundle{t.joint, t.config, t.column_names, PreprocessOptions{}, CalibrationRecord{},
                                  train_model(t, opts)});
  StreamFrame f{0.0, 10.0, {0.5, 0.5, 0.5, 0.5, 0.5}};
  for (auto _ : state) {
    f.time_s += 0.005;
    benchmark::DoNotOptimize(est.push(f));
  }
}
BENCHMARK(BM_StreamPush)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
