#include <dln/flow.hpp>
#include <dln/hessian.hpp>
#include <dln/landscape.hpp>
#include <dln/network.hpp>

#include <benchmark/benchmark.h>

namespace {

using namespace dln;

LayerDims dims_for(int H, Index width) {
  return LayerDims(width + 2, std::vector<Index>(static_cast<std::size_t>(H), width), 3);
}

Vector test_sigma() {
  Vector s(3);
  s << 3.0, 2.0, 1.0;
  return s;
}

WeightTuple random_point(const LayerDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> scales(static_cast<std::size_t>(dims.H() + 1), 0.5);
  return WeightTuple::gaussian(dims, scales, rng);
}

void BM_Gradient(benchmark::State& state) {
  const LayerDims dims = dims_for(static_cast<int>(state.range(0)), state.range(1));
  const WeightTuple w = random_point(dims, 1);
  const Vector sigma = test_sigma();
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(w, sigma));
}
BENCHMARK(BM_Gradient)->Args({1, 4})->Args({3, 4})->Args({3, 16})->Args({3, 64});

void BM_QuadraticForm(benchmark::State& state) {
  const LayerDims dims = dims_for(static_cast<int>(state.range(0)), state.range(1));
  const WeightTuple w = random_point(dims, 2);
  const Direction xi = random_point(dims, 3);
  const Vector sigma = test_sigma();
  for (auto _ : state) benchmark::DoNotOptimize(quadratic_form(w, xi, sigma, FormPath::General));
}
BENCHMARK(BM_QuadraticForm)->Args({1, 4})->Args({3, 4})->Args({3, 16});

void BM_HessianMatrix(benchmark::State& state) {
  const LayerDims dims = dims_for(static_cast<int>(state.range(0)), state.range(1));
  const WeightTuple w = random_point(dims, 4);
  const Vector sigma = test_sigma();
  for (auto _ : state) benchmark::DoNotOptimize(hessian_matrix(w, sigma));
  state.counters["dimension"] = static_cast<double>(w.size());
}
BENCHMARK(BM_HessianMatrix)->Args({1, 4})->Args({2, 4})->Args({1, 8})->Unit(benchmark::kMillisecond);

void BM_SaddleSpectrum(benchmark::State& state) {
  const LayerDims dims(6, {static_cast<Index>(state.range(0))}, 3);
  const Vector sigma = test_sigma();
  const SaddleConstruction s = construct_saddle(sigma, dims, {0});
  for (auto _ : state) benchmark::DoNotOptimize(spectrum(s.weights, sigma));
}
BENCHMARK(BM_SaddleSpectrum)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Integrate(benchmark::State& state) {
  const LayerDims dims = dims_for(static_cast<int>(state.range(0)), 4);
  const WeightTuple w0 = random_point(dims, 5);
  const Vector sigma = test_sigma();
  IntegratorConfig cfg;
  cfg.method = state.range(1) == 0 ? IntegrationMethod::Rk45 : IntegrationMethod::Rk4;
  cfg.step = 1e-2;
  cfg.t_max = 50.0;
  long steps = 0;
  for (auto _ : state) {
    const Trajectory traj = integrate(w0, sigma, cfg);
    steps = traj.accepted_steps;
    benchmark::DoNotOptimize(traj.terminal);
  }
  state.counters["steps"] = static_cast<double>(steps);
}
BENCHMARK(BM_Integrate)->Args({1, 0})->Args({3, 0})->Args({1, 1})->Unit(benchmark::kMillisecond);

void BM_CriticalValues(benchmark::State& state) {
  Vector sigma(state.range(0));
  for (Index i = 0; i < sigma.size(); ++i) sigma(i) = 1.0 + 0.37 * static_cast<double>(sigma.size() - i) + 0.01 * i * i;
  for (auto _ : state) benchmark::DoNotOptimize(critical_values(sigma, 0.0));
}
BENCHMARK(BM_CriticalValues)->Arg(4)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
