// Serial reference kernels vs the OpenMP kernels on layer shapes typical of a
// 9x9 tile network (batch 64). Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "jigsawhsi/kernels.hpp"
#include "jigsawhsi/random.hpp"
#include "jigsawhsi/tensor.hpp"

namespace {

using namespace jigsawhsi;
using nn::Shape4;
using nn::Tensor4;

constexpr std::size_t kBatch = 64;
constexpr std::size_t kSide = 9;

Tensor4<float> random_tensor(Shape4 shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4<float> t(shape);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-0.5, 0.5));
  return v;
}

struct ConvCase {
  std::size_t k, cin, cout;
  Tensor4<float> x, dy;
  std::vector<float> w, b;

  explicit ConvCase(const benchmark::State& state)
      : k(static_cast<std::size_t>(state.range(0))),
        cin(static_cast<std::size_t>(state.range(1))),
        cout(static_cast<std::size_t>(state.range(2))),
        x(random_tensor({kBatch, kSide, kSide, cin}, 1)),
        dy(random_tensor({kBatch, kSide, kSide, cout}, 2)),
        w(random_vector(k * k * cin * cout, 3)),
        b(random_vector(cout, 4)) {}

  void label(benchmark::State& state) const {
    const double macs = static_cast<double>(kBatch * kSide * kSide * k * k * cin * cout);
    state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
  }
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvCase c(state);
  Tensor4<float> y({kBatch, kSide, kSide, c.cout});
  for (auto _ : state) {
    if constexpr (Parallel) {
      nn::kernels::parallel::conv2d_forward<float>(c.x, c.w, c.b, c.k, y);
    } else {
      nn::kernels::reference::conv2d_forward<float>(c.x, c.w, c.b, c.k, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  c.label(state);
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  ConvCase c(state);
  Tensor4<float> dx({kBatch, kSide, kSide, c.cin});
  for (auto _ : state) {
    if constexpr (Parallel) {
      nn::kernels::parallel::conv2d_backward_input<float>(c.dy, c.w, c.k, dx);
    } else {
      nn::kernels::reference::conv2d_backward_input<float>(c.dy, c.w, c.k, dx);
    }
    benchmark::DoNotOptimize(dx.data());
  }
  c.label(state);
}

template <bool Parallel>
void BM_ConvBackwardParams(benchmark::State& state) {
  ConvCase c(state);
  std::vector<float> dw(c.w.size()), db(c.b.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      nn::kernels::parallel::conv2d_backward_params<float>(c.x, c.dy, c.k, dw, db);
    } else {
      nn::kernels::reference::conv2d_backward_params<float>(c.x, c.dy, c.k, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
  c.label(state);
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto out = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({kBatch, 1, 1, in}, 5);
  const auto w = random_vector(in * out, 6);
  const auto b = random_vector(out, 7);
  Tensor4<float> y({kBatch, 1, 1, out});
  for (auto _ : state) {
    if constexpr (Parallel) {
      nn::kernels::parallel::dense_forward<float>(x, w, b, y);
    } else {
      nn::kernels::reference::dense_forward<float>(x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({1, 6, 16})->Args({3, 16, 16})->Args({5, 16, 16})->Args({9, 16, 32});
  b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Apply(conv_args)->Name("conv_forward/reference");
BENCHMARK(BM_ConvForward<true>)->Apply(conv_args)->Name("conv_forward/parallel");
BENCHMARK(BM_ConvBackwardInput<false>)->Apply(conv_args)->Name("conv_backward_input/reference");
BENCHMARK(BM_ConvBackwardInput<true>)->Apply(conv_args)->Name("conv_backward_input/parallel");
BENCHMARK(BM_ConvBackwardParams<false>)->Apply(conv_args)->Name("conv_backward_params/reference");
BENCHMARK(BM_ConvBackwardParams<true>)->Apply(conv_args)->Name("conv_backward_params/parallel");
BENCHMARK(BM_DenseForward<false>)->Args({400, 64})->Args({1296, 256})->Name("dense_forward/reference");
BENCHMARK(BM_DenseForward<true>)->Args({400, 64})->Args({1296, 256})->Name("dense_forward/parallel");

BENCHMARK_MAIN();
