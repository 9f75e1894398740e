#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "evdispatch/kernels.hpp"
#include "evdispatch/netgraph.hpp"
#include "evdispatch/qnetwork.hpp"
#include "evdispatch/simcore.hpp"

using namespace evdispatch;

namespace {

struct Data {
  kernels::Shape s;
  std::vector<double> x, w, b, y, dy, dx, dw, db;
  explicit Data(kernels::Shape shape) : s(shape) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (double& e : v) e = u(rng);
    };
    fill(x, s.batch * s.in);
    fill(w, s.out * s.in);
    fill(b, s.out);
    fill(dy, s.batch * s.out);
    y.assign(s.batch * s.out, 0.0);
    dx.assign(s.batch * s.in, 0.0);
    dw.assign(s.out * s.in, 0.0);
    db.assign(s.out, 0.0);
  }
};

kernels::Shape shape_of(const benchmark::State& st) {
  return {static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)),
          static_cast<std::size_t>(st.range(2))};
}

template <bool Omp>
void BM_forward(benchmark::State& st) {
  Data d(shape_of(st));
  for (auto _ : st) {
    if constexpr (Omp) kernels::omp::dense_forward(d.x, d.w, d.b, d.s, d.y);
    else kernels::serial::dense_forward(d.x, d.w, d.b, d.s, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(d.s.batch * d.s.in * d.s.out));
}

template <bool Omp>
void BM_backward(benchmark::State& st) {
  Data d(shape_of(st));
  for (auto _ : st) {
    if constexpr (Omp) {
      kernels::omp::dense_backward_input(d.dy, d.w, d.s, d.dx);
      kernels::omp::dense_backward_params(d.dy, d.x, d.s, d.dw, d.db);
    } else {
      kernels::serial::dense_backward_input(d.dy, d.w, d.s, d.dx);
      kernels::serial::dense_backward_params(d.dy, d.x, d.s, d.dw, d.db);
    }
    benchmark::DoNotOptimize(d.dw.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * d.s.batch * d.s.in * d.s.out));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 15, 512})->Args({32, 512, 256})->Args({1, 512, 256})->Args({256, 512, 256});
}

BENCHMARK(BM_forward<false>)->Name("dense_forward/serial")->Apply(shapes);
BENCHMARK(BM_forward<true>)->Name("dense_forward/omp")->Apply(shapes);
BENCHMARK(BM_backward<false>)->Name("dense_backward/serial")->Apply(shapes);
BENCHMARK(BM_backward<true>)->Name("dense_backward/omp")->Apply(shapes);

void BM_qnetwork_train_pass(benchmark::State& st) {
  std::mt19937_64 rng(3);
  const std::size_t hidden[] = {512, 256};
  auto arch = st.range(0) ? Architecture::dueling : Architecture::dqn;
  QNetwork net = QNetwork::make(arch, 15, 5, hidden, rng);
  std::vector<double> x(32 * 15, 0.5), dq(32 * 5, 0.1);
  ForwardCache cache;
  QNetwork grads = net.zeros_like();
  for (auto _ : st) {
    net.forward(x, 32, cache);
    net.backward(cache, dq, grads);
    benchmark::DoNotOptimize(grads.layers().data());
  }
}
BENCHMARK(BM_qnetwork_train_pass)->Arg(0)->Arg(1);

void BM_world_day(benchmark::State& st) {
  const RoadNetwork net = gen_grid({});
  for (auto _ : st) {
    WorldState w = world_init(net, DemandProfile::double_peak(), static_cast<int>(st.range(0)), 400, 1, {});
    while (!w.clock().finished()) w.step();
    benchmark::DoNotOptimize(w.trajectory_hash());
  }
}
BENCHMARK(BM_world_day)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
