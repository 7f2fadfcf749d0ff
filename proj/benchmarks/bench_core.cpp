#include <map>

#include <benchmark/benchmark.h>

#include "progeval/arena.hpp"
#include "progeval/dataset.hpp"
#include "progeval/diffcore.hpp"
#include "progeval/estimators.hpp"
#include "progeval/features.hpp"
#include "progeval/metrics.hpp"
#include "progeval/random.hpp"
#include "progeval/rating.hpp"

using namespace progeval;

namespace {

const Corpus& corpus(int games) {
  static std::map<int, Corpus> cache;
  auto it = cache.find(games);
  if (it == cache.end()) it = cache.emplace(games, generate(standard_arena(games, 1)).corpus).first;
  return it->second;
}

diffcore::ArchSpec arch_for(int kind) {
  using namespace diffcore;
  switch (kind) {
    case 0:
      return {ArchKind::kUtilityMlp, OutputKind::kPerRowSigmoid, 24, 64, 0, 0, 0.3, 0.0};
    case 1:
      return {ArchKind::kUtilityMlp, OutputKind::kGroupSoftmax, 24, 64, 0, 0, 0.211, 0.0};
    case 2:
      return {ArchKind::kInteraction, OutputKind::kGroupSoftmax, 24, 32, 32, 0, 0.25, 0.0};
    default:
      return {ArchKind::kAttention, OutputKind::kGroupSoftmax, 24, 30, 25, 3, 0.2, 0.1};
  }
}

diffcore::Batch<float> batch_of(const diffcore::ArchSpec& arch, int groups) {
  Rng rng(3);
  diffcore::Batch<float> b;
  b.offsets.push_back(0);
  for (int g = 0; g < groups; ++g) {
    b.offsets.push_back(b.offsets.back() + 8);
    b.group_weight.push_back(1.0f);
    b.winner.push_back(static_cast<int>(rng.below(8)));
  }
  const int rows = b.offsets.back();
  b.x = diffcore::Matrix<float>(rows, arch.input_dim);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < arch.input_dim; ++j) b.x(i, j) = static_cast<float>(rng.normal());
  }
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < 8; ++i) b.labels.push_back(i == b.winner[g] ? 1.0f : 0.0f);
  }
  b.row_weight.assign(static_cast<std::size_t>(rows), 1.0f);
  return b;
}

std::vector<StandingRecord> league(int games, int types) {
  Rng rng(9);
  std::vector<StandingRecord> out;
  for (int g = 0; g < games; ++g) {
    for (int s = 0; s < 8; ++s) {
      StandingRecord r;
      r.game_id = "g" + std::to_string(100000 + g);
      r.game_order = g;
      r.seat_id = s;
      const auto t = static_cast<int>(rng.below(static_cast<std::uint64_t>(types)));
      r.player_type = t == 0 ? "VPAI" : "T" + std::to_string(t);
      r.revised_standing = (1.0 + 0.2 * t) * (0.05 + rng.uniform());
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

static void BM_ArenaGenerate(benchmark::State& state) {
  const auto cfg = standard_arena(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(generate(cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ArenaGenerate)->Arg(50);

static void BM_BuildFeatures(benchmark::State& state) {
  const auto& c = corpus(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Dataset::from_corpus(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildFeatures)->Arg(50)->Arg(300);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto arch = arch_for(static_cast<int>(state.range(0)));
  const auto params = diffcore::init_params<float>(arch, 1);
  const auto batch = batch_of(arch, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(diffcore::loss_and_gradient(arch, params, batch, diffcore::Mode::kTrain, {1, 0, 0}));
  }
  state.SetLabel(arch.tag());
  state.SetItemsProcessed(state.iterations() * batch.rows());
}
BENCHMARK(BM_ForwardBackward)->DenseRange(0, 3);

static void BM_RocAuc(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.125;
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y));
}
BENCHMARK(BM_RocAuc)->Arg(60000);

static void BM_IsotonicFit(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < s[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(IsotonicMap::fit(s, y));
}
BENCHMARK(BM_IsotonicFit)->Arg(60000);

static void BM_BtFit(benchmark::State& state) {
  const auto recs = league(static_cast<int>(state.range(0)), 12);
  for (auto _ : state) benchmark::DoNotOptimize(bt_fit(recs));
}
BENCHMARK(BM_BtFit)->Arg(300)->Arg(1000);

static void BM_Bootstrap(benchmark::State& state) {
  const auto recs = league(300, 12);
  BootstrapOptions o;
  o.resamples = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_inference(recs, {}, o));
}
BENCHMARK(BM_Bootstrap)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
