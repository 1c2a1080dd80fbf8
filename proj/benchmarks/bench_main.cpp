#include <benchmark/benchmark.h>

#include "nnland/landscape.hpp"

namespace {

nnland::DataPair bench_data(nnland::Index d) {
  nnland::Rng rng(42);
  return nnland::gen_data(d, d, rng);
}

void BM_LinearGradient(benchmark::State& state) {
  const auto d = static_cast<nnland::Index>(state.range(0));
  const auto l = static_cast<nnland::Index>(state.range(1));
  const nnland::DataPair data = bench_data(d);
  const auto cert = nnland::linear_minimizer(data, l, nnland::Transforms::random(1));
  nnland::Rng rng(7);
  nnland::LinearNet net = std::get<nnland::LinearNet>(cert.net);
  for (auto& w : net.layers) w += 0.1 * rng.gaussian(d, d);
  for (auto _ : state) benchmark::DoNotOptimize(nnland::linear_grad(net, data));
}
BENCHMARK(BM_LinearGradient)->Args({2, 2})->Args({4, 3})->Args({8, 3});

void BM_ResidualGradient(benchmark::State& state) {
  const auto d = static_cast<nnland::Index>(state.range(0));
  const nnland::DataPair data = bench_data(d);
  const auto cert =
      nnland::residual_minimizer(data, 3, 2, nnland::Transforms::random(1), nnland::Transforms::random(2));
  for (auto _ : state) benchmark::DoNotOptimize(nnland::gradient(cert.net, data));
}
BENCHMARK(BM_ResidualGradient)->Arg(2)->Arg(4);

void BM_BuildG(benchmark::State& state) {
  const auto d = static_cast<nnland::Index>(state.range(0));
  const nnland::DataPair data = bench_data(d);
  const auto cert = nnland::linear_minimizer(data, 3, nnland::Transforms::random(1));
  const auto& net = std::get<nnland::LinearNet>(cert.net);
  for (auto _ : state) benchmark::DoNotOptimize(nnland::build_G(net, data));
}
BENCHMARK(BM_BuildG)->Arg(2)->Arg(4)->Arg(8);

void BM_CheckGd(benchmark::State& state) {
  const nnland::DataPair data = bench_data(3);
  const auto cert = nnland::linear_minimizer(data, 3, nnland::Transforms::random(1));
  const nnland::GDParams params = nnland::gd_params(cert, data);
  const nnland::Rng rng(9);
  for (auto _ : state) benchmark::DoNotOptimize(nnland::check_gd(cert, data, params, state.range(0), rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CheckGd)->Arg(1000);

void BM_FdHessian(benchmark::State& state) {
  const auto d = static_cast<nnland::Index>(state.range(0));
  const nnland::DataPair data = bench_data(d);
  const auto cert = nnland::linear_minimizer(data, 2, nnland::Transforms::random(1));
  const nnland::Net shape = cert.net;
  const nnland::Vector p = nnland::flatten(shape);
  const nnland::ScalarField loss = [&](const nnland::Vector& v) {
    return nnland::evaluate(nnland::with_parameters(shape, v), data).loss;
  };
  for (auto _ : state) benchmark::DoNotOptimize(nnland::fd_hessian(loss, p));
}
BENCHMARK(BM_FdHessian)->Arg(2)->Arg(3);

}  // namespace
BENCHMARK_MAIN();
