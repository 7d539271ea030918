#include <benchmark/benchmark.h>

#include "bvr/dataset.hpp"
#include "bvr/embedding.hpp"
#include "bvr/field_proxy.hpp"
#include "bvr/model.hpp"
#include "bvr/nn.hpp"
#include "bvr/optimizer.hpp"
#include "bvr/uncertainty.hpp"

using namespace bvr;

namespace {

Matrix normal_matrix(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  rng.fill_normal(m);
  return m;
}

void BM_DenseForward(benchmark::State& state) {
  const Index batch = state.range(0);
  Rng rng(1);
  const DenseParams p = DenseParams::he_uniform(128, 96, rng);
  const Matrix x = normal_matrix(batch, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dense_apply(x, p));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenseForward)->Arg(32)->Arg(256)->Arg(1024);

void BM_DenseBackward(benchmark::State& state) {
  const Index batch = state.range(0);
  Rng rng(1);
  const DenseParams p = DenseParams::he_uniform(128, 96, rng);
  const Matrix x = normal_matrix(batch, 128, 2);
  const Matrix up = normal_matrix(batch, 96, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dense_backprop(x, p, up));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenseBackward)->Arg(32)->Arg(256)->Arg(1024);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig c;
  c.latent_dim = state.range(0);
  c.layer_kind = state.range(1) == 0 ? LayerKind::deterministic : LayerKind::probabilistic;
  Model m = Model::build(c);
  const Matrix x = normal_matrix(c.batch_size, c.input_dim, 4);
  Rng data_rng(5);
  Vector y(c.batch_size);
  for (Index i = 0; i < y.size(); ++i) y[i] = data_rng.normal();
  Rng rng(6);
  for (auto _ : state) {
    m.zero_grads();
    benchmark::DoNotOptimize(m.accumulate_gradients(x, y, ForwardOptions::training(), rng, 1e-4));
  }
  state.SetItemsProcessed(state.iterations() * c.batch_size);
}
BENCHMARK(BM_TrainStep)->Args({3, 0})->Args({90, 0})->Args({3, 1})->Unit(benchmark::kMillisecond);

void BM_McPredict(benchmark::State& state) {
  ModelConfig c;
  c.latent_dim = 3;
  Model m = Model::build(c);
  m.set_trained(true);
  const Matrix x = normal_matrix(60, c.input_dim, 7);
  const int samples = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mc_predict(m, x, samples, 8));
  state.SetItemsProcessed(state.iterations() * 60 * samples);
}
BENCHMARK(BM_McPredict)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
  const ProxyField field = ProxyField::generate(0);
  Rng rng(9);
  const Matrix pop = random_population(64, field.bounds(), rng);
  std::vector<DecisionVector> decisions;
  for (Index i = 0; i < pop.rows(); ++i) {
    decisions.emplace_back(std::span<const double>(pop.row(i).data(), static_cast<std::size_t>(pop.cols())));
  }
  std::size_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate(decisions[k++ % decisions.size()], field));
  }
}
BENCHMARK(BM_Simulate);

void BM_Tsne(benchmark::State& state) {
  const Index n = state.range(0);
  const Matrix data = normal_matrix(n, 3, 10);
  TsneParams params;
  params.iterations = 300;
  for (auto _ : state) benchmark::DoNotOptimize(tsne_project(data, params));
}
BENCHMARK(BM_Tsne)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
