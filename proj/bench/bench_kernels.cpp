#include <benchmark/benchmark.h>

#include <vector>

#include "fedhet/datagen.hpp"
#include "fedhet/fedcore.hpp"
#include "fedhet/metrics.hpp"
#include "fedhet/nn.hpp"
#include "fedhet/random.hpp"

namespace {

using namespace fedhet;

const Dataset& pool() {
  static const Dataset ds = gen_synthetic(10, 20, 400, 0.4, 1);
  return ds;
}

const nn::ModelParams& model() {
  static const nn::ModelParams p = nn::init_mlp({20, 32, 10}, 2);
  return p;
}

std::vector<ClientState> clients(std::size_t n) {
  std::vector<ClientState> out(n);
  const std::size_t per = pool().size() / n;
  for (std::size_t c = 0; c < n; ++c) {
    out[c].id = c;
    for (std::size_t i = c * per; i < (c + 1) * per; ++i) out[c].data.push_back(i);
  }
  return out;
}

std::vector<ClientJob> jobs_for(const std::vector<ClientState>& cs) {
  std::vector<ClientJob> jobs;
  for (const auto& c : cs) jobs.push_back({&c, {0.05, 16, 3, derive_seed(7, {c.id})}, std::nullopt});
  return jobs;
}

void BM_TrainClientsSerial(benchmark::State& state) {
  const auto cs = clients(static_cast<std::size_t>(state.range(0)));
  const auto jobs = jobs_for(cs);
  for (auto _ : state) benchmark::DoNotOptimize(train_clients_serial(model(), jobs, pool()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainClientsSerial)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_TrainClientsParallel(benchmark::State& state) {
  const auto cs = clients(static_cast<std::size_t>(state.range(0)));
  const auto jobs = jobs_for(cs);
  const int workers = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(train_clients(model(), jobs, pool(), workers));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainClientsParallel)->Args({5, 2})->Args({10, 4})->Unit(benchmark::kMillisecond);

void BM_PredictAll(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(predict_all(model(), pool(), workers));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pool().size()));
}
BENCHMARK(BM_PredictAll)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_AccuracyReference(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::accuracy(model(), pool()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pool().size()));
}
BENCHMARK(BM_AccuracyReference)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
