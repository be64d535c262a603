#include <benchmark/benchmark.h>

#include "hogwild/training.hpp"

using namespace hogwild;

namespace {

Graph ring_graph(int n, int feat_dim) {
  std::vector<double> x;
  for (int i = 0; i < n * feat_dim; ++i) x.push_back(0.01 * (i % 17) - 0.05);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) pairs.emplace_back(std::min(i, (i + 1) % n), std::max(i, (i + 1) % n));
  return make_graph(n, pairs, Tensor::from_data(n, feat_dim, x), Tensor(), Tensor());
}

void bench_tape_matmul_backward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Tensor a = Tensor::full(n, n, 0.5);
  Tensor b = Tensor::full(n, n, 0.25);
  for (auto _ : state) {
    Tape tape;
    Tensor at = tape.track(a);
    Tensor bt = tape.track(b);
    Tensor loss = sum_all(matmul(at, bt));
    Gradients grads = tape.backward(loss);
    benchmark::DoNotOptimize(grads.grad(at).at(0));
  }
}
BENCHMARK(bench_tape_matmul_backward)->Arg(8)->Arg(32);

void bench_local_energy_gradients(benchmark::State& state) {
  Graph g = ring_graph(8, 3);
  ModelConfig cfg;
  cfg.kind = ModelKind::EnergyNode;
  cfg.feat_dim = 3;
  cfg.out_dim = 1;
  Model m = make_model(cfg, 0);
  BoundParams bp = bind_params(m.params, nullptr);
  std::unique_ptr<NodeEnergy> energy = make_node_energy(bp, cfg, g);
  Tensor h_own = Tensor::full(1, cfg.embed_dim, 0.1);
  std::vector<Tensor> views(2, Tensor::full(1, cfg.embed_dim, -0.2));
  for (auto _ : state) {
    LocalGradients lg = local_node_gradients(*energy, g, 0, h_own, views);
    benchmark::DoNotOptimize(lg.own.at(0));
  }
}
BENCHMARK(bench_local_energy_gradients);

void bench_async_updates(benchmark::State& state) {
  Graph g = ring_graph(12, 3);
  ModelConfig cfg;
  cfg.kind = ModelKind::Ignn;
  cfg.feat_dim = 3;
  cfg.out_dim = 1;
  Model m = make_model(cfg, 0);
  std::unique_ptr<FiniteAsyncModel> sim = make_finite_async(m, g);
  AsyncConfig acfg;
  acfg.total_updates = 2000;
  for (auto _ : state) {
    AsyncTrace trace = simulate(*sim, g, acfg);
    benchmark::DoNotOptimize(trace.updates);
    acfg.seed += 1;
  }
  state.SetItemsProcessed(state.iterations() * 2000);
}
BENCHMARK(bench_async_updates);

}  // namespace

BENCHMARK_MAIN();
