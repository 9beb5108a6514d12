#include <benchmark/benchmark.h>

#include "pclreid/bank.hpp"
#include "pclreid/cluster.hpp"
#include "pclreid/dataio.hpp"
#include "pclreid/losses.hpp"
#include "pclreid/metrics.hpp"
#include "pclreid/model.hpp"
#include "pclreid/numerics.hpp"
#include "pclreid/rng.hpp"

using namespace pclreid;

namespace {

Matrix unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return l2_normalize_rows(m).unit;
}

std::vector<int> cyclic_labels(std::size_t n, std::size_t classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
  return y;
}

void BM_EncoderForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  EncoderHead head = EncoderHead::init({64, 64, 32}, 1);
  const Matrix x = unit_rows(batch, 64, 2);
  const Matrix g = unit_rows(batch, 96, 3);
  for (auto _ : state) {
    auto out = encoder_forward(head, x, Mode::train);
    auto grads = encoder_backward(head, out.cache, g);
    benchmark::DoNotOptimize(grads);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EncoderForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_PclLoss(benchmark::State& state) {
  const auto classes = static_cast<std::size_t>(state.range(0));
  const CentroidBank bank(unit_rows(classes, 96, 4), 0.2, 0.05);
  const Matrix f = unit_rows(64, 96, 5);
  const auto y = cyclic_labels(64, classes);
  for (auto _ : state) benchmark::DoNotOptimize(pcl_loss(bank, f, y));
}
BENCHMARK(BM_PclLoss)->Arg(32)->Arg(256)->Arg(1024);

void BM_BankUpdate(benchmark::State& state) {
  CentroidBank bank(unit_rows(32, 96, 6), 0.2, 0.05);
  const Matrix f = unit_rows(64, 96, 7);
  const auto y = cyclic_labels(64, 32);
  for (auto _ : state) {
    bank.update_batch(y, f);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_BankUpdate);

void BM_CosineDbscan(benchmark::State& state) {
  auto spec = SyntheticSpec::standard(1);
  spec.samples_per_class = static_cast<std::size_t>(state.range(0));
  const auto data = gen_synthetic(spec);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_dbscan(data.features, 0.5, 4));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_CosineDbscan)->Arg(10)->Arg(40);

void BM_Evaluate(benchmark::State& state) {
  const auto data = gen_synthetic(SyntheticSpec::standard(2));
  const auto q = select_split(data, Split::query), g = select_split(data, Split::gallery);
  const EvalSet query{q.features, q.labels, q.cameras}, gallery{g.features, g.labels, g.cameras};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(query, gallery, true));
}
BENCHMARK(BM_Evaluate);

}  // namespace

BENCHMARK_MAIN();
