#include "progeval/validity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "progeval/error.hpp"
#include "progeval/parallel.hpp"
#include "progeval/random.hpp"
#include "progeval/stats.hpp"

namespace progeval {

Metrics compute_metrics(std::span<const double> probs, std::span<const int> labels) {
  Metrics m;
  m.n_rows = static_cast<int>(probs.size());
  if (probs.empty()) return m;
  m.log_loss = log_loss(probs, labels);
  m.brier = brier(probs, labels);
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y != 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 0; });
  if (has_pos && has_neg) m.auc = roc_auc(probs, labels);
  return m;
}

const StratumMetrics* MetricsReport::find(std::string_view estimator, std::string_view kind,
                                          std::string_view stratum) const {
  for (const auto& r : rows) {
    if (r.estimator == estimator && r.stratum_kind == kind && r.stratum == stratum) return &r;
  }
  return nullptr;
}

int progress_decile(double tp) { return std::clamp(static_cast<int>(std::floor(tp * 10.0)) + 1, 1, 10); }

MetricsReport stratified_metrics(const std::string& estimator, const Dataset& d, std::span<const double> probs,
                                 double late_game) {
  if (static_cast<int>(probs.size()) != d.rows()) throw Error(ErrorKind::kShapeMismatch, "metrics: prediction count");
  struct Acc {
    std::vector<double> p;
    std::vector<int> y;
  };
  Acc overall;
  std::array<Acc, 10> deciles;
  std::array<Acc, kVictoryTypes.size()> vtypes;
  std::map<std::string, Acc> corpora;
  for (int r = 0; r < d.rows(); ++r) {
    const double p = probs[r];
    if (std::isnan(p)) continue;
    const int y = d.won[r];
    const auto& game = d.games[d.game[r]];
    auto push = [&](Acc& a) {
      a.p.push_back(p);
      a.y.push_back(y);
    };
    push(overall);
    push(deciles[progress_decile(d.turn_progress[r]) - 1]);
    if (d.turn_progress[r] >= late_game) push(vtypes[static_cast<std::size_t>(game.victory_type)]);
    push(corpora[std::string(to_string(game.corpus_tag))]);
  }
  MetricsReport rep;
  auto add = [&](const char* kind, std::string stratum, const Acc& a) {
    rep.rows.push_back({estimator, kind, std::move(stratum), compute_metrics(a.p, a.y)});
  };
  add("overall", "all", overall);
  for (int i = 0; i < 10; ++i) add("decile", std::to_string(i + 1), deciles[i]);
  for (auto vt : kVictoryTypes) add("victory_type", std::string(to_string(vt)), vtypes[static_cast<std::size_t>(vt)]);
  for (const auto& [tag, acc] : corpora) add("corpus", tag, acc);
  return rep;
}

void append_report(MetricsReport& into, const MetricsReport& from) {
  into.rows.insert(into.rows.end(), from.rows.begin(), from.rows.end());
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.10g}", *v) : std::string(); };
  out << "estimator,stratum_kind,stratum,n_rows,auc,log_loss,brier\n";
  for (const auto& r : report.rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.estimator, r.stratum_kind, r.stratum, r.metrics.n_rows,
                       opt(r.metrics.auc), opt(r.metrics.log_loss), opt(r.metrics.brier));
  }
}

RankAgreement rank_agreement(const Dataset& d, std::span<const double> a, std::span<const double> b, int bins) {
  if (static_cast<int>(a.size()) != d.rows() || static_cast<int>(b.size()) != d.rows()) {
    throw Error(ErrorKind::kKeyMismatch, "rank agreement: prediction counts differ from the dataset");
  }
  if (bins < 1) throw Error(ErrorKind::kInvalidConfig, "rank agreement bins");
  RankAgreement res;
  res.bins.resize(static_cast<std::size_t>(bins));
  std::vector<double> sums(static_cast<std::size_t>(bins), 0.0);
  double total = 0;
  int counted = 0;
  for (int b2 = 0; b2 < bins; ++b2) {
    res.bins[b2].lo = static_cast<double>(b2) / bins;
    res.bins[b2].hi = static_cast<double>(b2 + 1) / bins;
  }
  for (const auto& g : d.groups) {
    const auto rho = stats::spearman(a.subspan(g.begin, g.size), b.subspan(g.begin, g.size));
    if (!rho) {
      ++res.skipped;
      res.rho.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    res.rho.push_back(*rho);
    const int bin = std::clamp(static_cast<int>(std::floor(g.turn_progress * bins)), 0, bins - 1);
    sums[bin] += *rho;
    ++res.bins[bin].count;
    total += *rho;
    ++counted;
  }
  for (int b2 = 0; b2 < bins; ++b2) {
    res.bins[b2].mean_rho = res.bins[b2].count > 0 ? sums[b2] / res.bins[b2].count
                                                   : std::numeric_limits<double>::quiet_NaN();
  }
  res.mean_rho = counted > 0 ? total / counted : std::numeric_limits<double>::quiet_NaN();
  return res;
}

RankAgreement rank_agreement(const Dataset& d, const PredictionTable& a, const PredictionTable& b, int bins) {
  if (static_cast<int>(a.rows.size()) != d.rows() || static_cast<int>(b.rows.size()) != d.rows()) {
    throw Error(ErrorKind::kKeyMismatch, "prediction tables cover different keys");
  }
  const auto pa = align_predictions(a, d);
  const auto pb = align_predictions(b, d);
  return rank_agreement(d, pa, pb, bins);
}

double bt_ordering_agreement(const std::vector<std::map<std::string, double>>& tables) {
  if (tables.size() < 2) throw Error(ErrorKind::kMismatchedPlayerTypes, "need at least two rating tables");
  for (const auto& t : tables) {
    if (t.size() != tables.front().size() ||
        !std::equal(t.begin(), t.end(), tables.front().begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; })) {
      throw Error(ErrorKind::kMismatchedPlayerTypes, "rating tables cover different player types");
    }
  }
  double total = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (std::size_t j = i + 1; j < tables.size(); ++j) {
      std::vector<double> x, y;
      for (const auto& [k, v] : tables[i]) {
        x.push_back(v);
        y.push_back(tables[j].at(k));
      }
      const auto rho = stats::spearman(x, y);
      total += rho.value_or(0.0);
      ++pairs;
    }
  }
  return total / pairs;
}

const ImportanceCell& ImportanceGrid::at(std::string_view group, std::string_view vt) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g] != group) continue;
    for (std::size_t v = 0; v < victory_types.size(); ++v) {
      if (victory_types[v] == vt) return cells[g][v];
    }
  }
  throw Error(ErrorKind::kKeyMismatch, fmt::format("no importance cell {}/{}", group, vt));
}

ImportanceGrid group_permutation_importance(const TrainedEstimator& model, const Dataset& d,
                                            const ImportanceOptions& o) {
  if (o.repeats < 1) throw Error(ErrorKind::kInvalidConfig, "repeats must be >= 1");
  ImportanceGrid grid;
  grid.repeats = o.repeats;
  grid.groups = o.groups;
  if (grid.groups.empty()) {
    for (const auto& g : d.column_groups) {
      if (g != "none" && std::find(grid.groups.begin(), grid.groups.end(), g) == grid.groups.end()) {
        grid.groups.push_back(g);
      }
    }
  }
  // Victory-type strata present in the data, then the pooled stratum.
  std::vector<int> stratum_of_row(static_cast<std::size_t>(d.rows()));
  std::set<int> present;
  for (const auto& g : d.games) present.insert(static_cast<int>(g.victory_type));
  std::map<int, int> slot;
  for (int v : present) {
    slot[v] = static_cast<int>(grid.victory_types.size());
    grid.victory_types.emplace_back(to_string(static_cast<VictoryType>(v)));
  }
  grid.victory_types.emplace_back("all");
  const int nstrata = static_cast<int>(grid.victory_types.size());
  for (int r = 0; r < d.rows(); ++r) stratum_of_row[r] = slot[static_cast<int>(d.games[d.game[r]].victory_type)];

  auto stratum_losses = [&](const std::vector<double>& p) {
    std::vector<double> sum(static_cast<std::size_t>(nstrata), 0.0);
    std::vector<int> n(static_cast<std::size_t>(nstrata), 0);
    for (int r = 0; r < d.rows(); ++r) {
      const double q = std::clamp(p[r], 1e-12, 1.0 - 1e-12);
      const double l = d.won[r] != 0 ? -std::log(q) : -std::log1p(-q);
      sum[stratum_of_row[r]] += l;
      ++n[stratum_of_row[r]];
      sum[nstrata - 1] += l;
      ++n[nstrata - 1];
    }
    for (int s = 0; s < nstrata; ++s) sum[s] = n[s] > 0 ? sum[s] / n[s] : 0.0;
    return sum;
  };
  const auto base = stratum_losses(model.predict(d));

  std::map<int, std::vector<int>> groups_by_size;
  for (int g = 0; g < static_cast<int>(d.groups.size()); ++g) groups_by_size[d.groups[g].size].push_back(g);
  for (const auto& [size, members] : groups_by_size) {
    if (members.size() < 2) grid.undonored += static_cast<int>(members.size());
  }

  const int ngroups = static_cast<int>(grid.groups.size());
  // deltas[(group * repeats + repeat) * nstrata + stratum]
  std::vector<double> deltas(static_cast<std::size_t>(ngroups) * o.repeats * nstrata, 0.0);
  parallel_for(static_cast<std::size_t>(ngroups) * o.repeats, [&](std::size_t job) {
    const int gi = static_cast<int>(job) / o.repeats;
    const int rep = static_cast<int>(job) % o.repeats;
    const auto cols = d.group_columns(grid.groups[gi]);
    Rng rng(derive_seed(o.seed, hash_string(grid.groups[gi]), static_cast<std::uint64_t>(rep)));
    Dataset permuted = d;
    std::vector<int> perm;
    for (int g = 0; g < static_cast<int>(d.groups.size()); ++g) {
      const auto& target = d.groups[g];
      const auto& pool = groups_by_size[target.size];
      if (pool.size() < 2) continue;
      int donor = g;
      while (donor == g) donor = pool[rng.below(pool.size())];
      const auto& src = d.groups[donor];
      perm.resize(static_cast<std::size_t>(src.size));
      for (int i = 0; i < src.size; ++i) perm[i] = i;
      rng.shuffle(std::span<int>(perm));
      for (int i = 0; i < target.size; ++i) {
        for (int c : cols) permuted.x(target.begin + i, c) = d.x(src.begin + perm[i], c);
      }
    }
    const auto losses = stratum_losses(model.predict(permuted));
    for (int s = 0; s < nstrata; ++s) deltas[(job * nstrata) + s] = losses[s] - base[s];
  });

  grid.cells.assign(static_cast<std::size_t>(ngroups), std::vector<ImportanceCell>(static_cast<std::size_t>(nstrata)));
  for (int gi = 0; gi < ngroups; ++gi) {
    for (int s = 0; s < nstrata; ++s) {
      std::vector<double> v;
      for (int rep = 0; rep < o.repeats; ++rep) {
        v.push_back(deltas[(static_cast<std::size_t>(gi) * o.repeats + rep) * nstrata + s]);
      }
      grid.cells[gi][s] = {stats::mean(v), std::sqrt(stats::variance(v))};
    }
  }
  return grid;
}

void write_importance_csv(std::ostream& out, const ImportanceGrid& grid) {
  out << "group,victory_type,mean_delta_log_loss,std,repeats\n";
  for (std::size_t g = 0; g < grid.groups.size(); ++g) {
    for (std::size_t v = 0; v < grid.victory_types.size(); ++v) {
      out << fmt::format("{},{},{:.10g},{:.10g},{}\n", grid.groups[g], grid.victory_types[v], grid.cells[g][v].mean,
                         grid.cells[g][v].std, grid.repeats);
    }
  }
}

}  // namespace progeval
