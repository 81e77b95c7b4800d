// SPDX-License-Identifier: Apache-2.0
// Production (im2col + GEMM, OpenMP) kernels against the serial reference
// implementation, plus whole-network training steps.
#include <benchmark/benchmark.h>

#include <random>

#include "ensnet/kernels.hpp"
#include "ensnet/model.hpp"
#include "ensnet/reference.hpp"

namespace {

using ensnet::Tensor;

Tensor<float> random_tensor(const ensnet::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  Tensor<float> t(shape);
  for (auto& v : t.span()) v = u(rng);
  return t;
}

// Args: batch, channels, size, filters (5x5 kernel, same padding).
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 1, 48, 32})->Args({8, 32, 24, 64})->Args({8, 64, 12, 64})->Args({8, 64, 6, 32});
}

struct ConvCase {
  Tensor<float> x, w, b, dy;
  explicit ConvCase(const benchmark::State& s)
      : x(random_tensor({std::size_t(s.range(0)), std::size_t(s.range(1)), std::size_t(s.range(2)),
                         std::size_t(s.range(2))}, 1)),
        w(random_tensor({std::size_t(s.range(3)), std::size_t(s.range(1)), 5, 5}, 2)),
        b(random_tensor({std::size_t(s.range(3))}, 3)),
        dy(random_tensor({std::size_t(s.range(0)), std::size_t(s.range(3)), std::size_t(s.range(2)),
                          std::size_t(s.range(2))}, 4)) {}
  double macs() const { return double(dy.size()) * double(w.size() / w.dim(0)); }
};

void BM_ConvForward(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::kernels::conv2d_forward(c.x, c.w, c.b, 1, 2));
  state.counters["GMAC/s"] = benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvForward)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_ConvForwardReference(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::reference::conv2d_forward(c.x, c.w, c.b, 1, 2));
  state.counters["GMAC/s"] = benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::kernels::conv2d_backward(c.x, c.w, c.dy, 1, 2));
  state.counters["GMAC/s"] =
      benchmark::Counter(2 * c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvBackward)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_ConvBackwardReference(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::reference::conv2d_backward(c.x, c.w, c.dy, 1, 2));
  state.counters["GMAC/s"] =
      benchmark::Counter(2 * c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_BatchNormTrain(benchmark::State& state) {
  const auto x = random_tensor({32, 64, 24, 24}, 5);
  const Tensor<float> gamma({64}, 1.f), beta({64}, 0.f);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::kernels::batchnorm_forward_train(x, gamma, beta, 1e-5f));
}
BENCHMARK(BM_BatchNormTrain)->Unit(benchmark::kMillisecond);

void BM_BatchNormTrainReference(benchmark::State& state) {
  const auto x = random_tensor({32, 64, 24, 24}, 5);
  const Tensor<float> gamma({64}, 1.f), beta({64}, 0.f);
  for (auto _ : state)
    benchmark::DoNotOptimize(ensnet::reference::batchnorm_forward_train(x, gamma, beta, 1e-5f));
}
BENCHMARK(BM_BatchNormTrainReference)->Unit(benchmark::kMillisecond);

void BM_MaxPool(benchmark::State& state) {
  const auto x = random_tensor({32, 32, 48, 48}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::kernels::maxpool2_forward(x));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMillisecond);

void BM_MaxPoolReference(benchmark::State& state) {
  const auto x = random_tensor({32, 32, 48, 48}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(ensnet::reference::maxpool2_forward(x));
}
BENCHMARK(BM_MaxPoolReference)->Unit(benchmark::kMillisecond);

// Args: input size, batch. One branch trained per step (phase 1 shape).
void BM_BranchTrainStep(benchmark::State& state) {
  ensnet::ArchConfig arch;
  arch.input_size = std::size_t(state.range(0));
  arch.num_branches = 3;
  ensnet::EnsembleNetwork<float> net(arch, 7);
  const auto x = random_tensor({std::size_t(state.range(1)), 1, arch.input_size, arch.input_size}, 8);
  Tensor<float> target({x.dim(0), arch.num_classes});
  for (std::size_t i = 0; i < x.dim(0); ++i) target.at(i, i % arch.num_classes) = 1.f;
  for (auto _ : state) {
    net.zero_grad();
    const auto p = net.forward_branch(0, x, ensnet::Mode::Training);
    net.backward_branch(0, ensnet::kernels::softmax_cross_entropy_grad(p, target));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_BranchTrainStep)->Args({48, 32})->Args({96, 32})->Unit(benchmark::kMillisecond);

void BM_InferAll(benchmark::State& state) {
  ensnet::ArchConfig arch;
  arch.input_size = std::size_t(state.range(0));
  arch.num_branches = 3;
  const ensnet::EnsembleNetwork<float> net(arch, 7);
  const auto x = random_tensor({64, 1, arch.input_size, arch.input_size}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer_all(x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_InferAll)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
