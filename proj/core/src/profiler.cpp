#include "progeval/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "progeval/error.hpp"

namespace progeval {
namespace {

std::size_t path_index(VictoryPath p) { return static_cast<std::size_t>(p); }

std::size_t argmax(const PathArray& a) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] > a[best]) best = i;
  }
  return best;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

PathArray seat_time_shares(const GameRecord& game, int seat) {
  PathArray shares{};
  const auto& snaps = game.snapshots;
  double total = 0.0;
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    const double duration = k + 1 < snaps.size() ? snaps[k + 1].turn - snaps[k].turn : 1.0;
    shares[path_index(snaps[k].signals.at(static_cast<std::size_t>(seat)).victory_pursuit)] += duration;
    total += duration;
  }
  if (total <= 0) throw Error(ErrorKind::kNoPursuitData, game.game_id);
  for (auto& s : shares) s /= total;
  return shares;
}

VictoryPath dominant_path(const PathArray& shares) { return kVictoryPaths[argmax(shares)]; }

const TypeAllocation* AllocationProfile::find(const std::string& type) const {
  for (const auto& t : types) {
    if (t.player_type == type) return &t;
  }
  return nullptr;
}

AllocationProfile time_allocation(const Corpus& corpus) {
  std::map<std::string, std::vector<PathArray>> by_type;
  for (const auto& game : corpus) {
    if (game.snapshots.empty()) continue;
    for (const auto& seat : game.seats) by_type[seat.player_type].push_back(seat_time_shares(game, seat.seat_id));
  }
  if (by_type.empty()) throw Error(ErrorKind::kNoPursuitData, "no game has recorded snapshots");
  AllocationProfile profile;
  for (auto& [type, games] : by_type) {
    TypeAllocation t;
    t.player_type = type;
    t.n_games = static_cast<int>(games.size());
    PathArray means{};
    for (std::size_t p = 0; p < 4; ++p) {
      std::vector<double> x;
      for (const auto& g : games) x.push_back(g[p]);
      t.paths[p].mean = stats::mean(x);
      t.paths[p].sd = std::sqrt(stats::variance(x));
      t.paths[p].test = stats::one_sample_t(x, 0.25);
      means[p] = t.paths[p].mean;
    }
    t.dominant = dominant_path(means);
    t.per_game = std::move(games);
    profile.types.push_back(std::move(t));
  }
  return profile;
}

std::vector<CommitmentRow> commitment(const AllocationProfile& profile, const std::string& baseline) {
  const auto* base = profile.find(baseline);
  if (base == nullptr) throw Error(ErrorKind::kMissingBaseline, baseline);
  auto dominant_shares = [](const TypeAllocation& t) {
    std::vector<double> x;
    for (const auto& g : t.per_game) x.push_back(g[path_index(t.dominant)]);
    return x;
  };
  const auto b = dominant_shares(*base);
  std::vector<CommitmentRow> rows;
  for (const auto& t : profile.types) {
    const auto a = dominant_shares(t);
    CommitmentRow r;
    r.player_type = t.player_type;
    r.dominant = t.dominant;
    r.share = stats::mean(a);
    r.baseline_share = stats::mean(b);
    r.delta = r.share - r.baseline_share;
    r.test = stats::welch_t(a, b);
    rows.push_back(r);
  }
  return rows;
}

PivotReport detect_pivots(const Corpus& corpus, const PredictionTable* predictions, const PivotOptions& options) {
  // (game, seat) -> turn -> probability
  std::map<std::pair<std::string, int>, std::map<int, double>> prob;
  if (predictions != nullptr) {
    for (const auto& row : predictions->rows) prob[{row.game_id, row.seat_id}][row.turn] = row.probability;
  }
  PivotReport report;
  for (const auto& game : corpus) {
    for (const auto& seat : game.seats) {
      auto& freq = report.frequency[seat.player_type];
      ++freq.games;
      if (game.snapshots.empty()) continue;
      const auto s = static_cast<std::size_t>(seat.seat_id);
      VictoryPath prev = game.snapshots.front().signals.at(s).victory_pursuit;
      const std::map<int, double>* turns = nullptr;
      if (auto it = prob.find({game.game_id, seat.seat_id}); it != prob.end()) turns = &it->second;
      for (std::size_t k = 1; k < game.snapshots.size(); ++k) {
        const auto& snap = game.snapshots[k];
        const VictoryPath cur = snap.signals.at(s).victory_pursuit;
        if (cur != prev && snap.turn > options.min_turn) {
          PivotEvent e{game.game_id, seat.seat_id, seat.player_type, snap.turn, prev, cur};
          if (turns != nullptr) {
            auto it = turns->upper_bound(snap.turn);
            if (it != turns->begin()) e.win_prob = std::prev(it)->second;
          }
          report.events.push_back(std::move(e));
          ++freq.events;
        }
        prev = cur;
      }
    }
  }
  return report;
}

std::array<double, 12> FlowMatrix::off_diagonal() const {
  std::array<double, 12> out{};
  std::size_t k = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) out[k++] = rate[i][j];
    }
  }
  return out;
}

std::map<std::string, FlowMatrix> pivot_flows(const PivotReport& report) {
  std::map<std::string, FlowMatrix> flows;
  std::map<std::string, PathMatrix> prob_sum;
  std::map<std::string, PathMatrix> prob_n;
  for (const auto& [type, freq] : report.frequency) {
    auto& m = flows[type];
    m.player_type = type;
    m.games = freq.games;
    prob_sum[type] = {};
    prob_n[type] = {};
  }
  for (const auto& e : report.events) {
    auto& m = flows[e.player_type];
    m.player_type = e.player_type;
    const auto i = path_index(e.from);
    const auto j = path_index(e.to);
    m.counts[i][j] += 1.0;
    if (!std::isnan(e.win_prob)) {
      prob_sum[e.player_type][i][j] += e.win_prob;
      prob_n[e.player_type][i][j] += 1.0;
    }
  }
  for (auto& [type, m] : flows) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        m.rate[i][j] = m.games > 0 ? m.counts[i][j] / m.games : 0.0;
        const double n = prob_n[type][i][j];
        m.win_prob[i][j] = n > 0 ? prob_sum[type][i][j] / n : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return flows;
}

FlowSimilarity flow_similarity(const std::map<std::string, FlowMatrix>& flows,
                               const std::map<std::string, std::string>& family) {
  FlowSimilarity out;
  std::vector<std::string> types;
  for (const auto& [type, fam] : family) {
    if (flows.contains(type)) types.push_back(type);
  }
  double within = 0.0;
  double cross = 0.0;
  int n_within = 0;
  int n_cross = 0;
  for (std::size_t a = 0; a < types.size(); ++a) {
    for (std::size_t b = a + 1; b < types.size(); ++b) {
      const auto x = flows.at(types[a]).off_diagonal();
      const auto y = flows.at(types[b]).off_diagonal();
      const auto r = stats::pearson(x, y);
      if (!r) {
        ++out.skipped;
        continue;
      }
      const bool same = family.at(types[a]) == family.at(types[b]);
      out.pairs.push_back({types[a], types[b], *r, same});
      if (same) {
        within += *r;
        ++n_within;
      } else {
        cross += *r;
        ++n_cross;
      }
    }
  }
  if (n_within > 0) out.within_mean = within / n_within;
  if (n_cross > 0) out.cross_mean = cross / n_cross;
  return out;
}

std::map<VictoryPath, RatingTable> rate_by_dominant_path(const Corpus& corpus,
                                                         const std::vector<StandingRecord>& records,
                                                         const BtOptions& options_in) {
  BtOptions options = options_in;
  options.likelihood_trace = nullptr;
  std::map<std::pair<std::string, int>, VictoryPath> dominant;
  for (const auto& game : corpus) {
    if (game.snapshots.empty()) continue;
    for (const auto& seat : game.seats) {
      dominant[{game.game_id, seat.seat_id}] = dominant_path(seat_time_shares(game, seat.seat_id));
    }
  }
  std::map<VictoryPath, RatingTable> out;
  for (VictoryPath p : kVictoryPaths) {
    std::vector<StandingRecord> kept;
    for (const auto& r : records) {
      auto it = dominant.find({r.game_id, r.seat_id});
      if (it != dominant.end() && it->second == p) kept.push_back(r);
    }
    if (kept.empty()) continue;
    try {
      out.emplace(p, bt_fit(kept, options));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDisconnectedGraph) throw;
    }
  }
  return out;
}

std::vector<BestStrategy> best_strategy_summary(const std::map<VictoryPath, RatingTable>& by_path,
                                                const AllocationProfile& profile,
                                                const std::map<std::string, FlowMatrix>& flows, int min_games) {
  std::vector<BestStrategy> out;
  for (const auto& t : profile.types) {
    BestStrategy b;
    b.player_type = t.player_type;
    PathArray means{};
    for (std::size_t p = 0; p < 4; ++p) means[p] = t.paths[p].mean;
    b.most_chosen = {t.dominant, means[path_index(t.dominant)]};
    b.most_pivoted_to = {b.most_chosen.path, 0.0};
    if (auto it = flows.find(t.player_type); it != flows.end()) {
      PathArray incoming{};
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) incoming[j] += it->second.rate[i][j];
      }
      const auto j = argmax(incoming);
      if (incoming[j] > 0) b.most_pivoted_to = {kVictoryPaths[j], incoming[j]};
    }
    for (const auto& [path, table] : by_path) {
      const auto* e = table.find(t.player_type);
      if (e == nullptr || e->n_games < min_games) continue;
      if (!b.best_elo || e->elo > b.best_elo->value) b.best_elo = StrategyLabel{path, e->elo};
    }
    out.push_back(b);
  }
  return out;
}

void write_allocation_csv(std::ostream& out, const AllocationProfile& profile) {
  out << "type,path,mean_share,sd,n_games,t_stat,p_value,degenerate,dominant\n";
  for (const auto& t : profile.types) {
    for (std::size_t p = 0; p < 4; ++p) {
      const auto& s = t.paths[p];
      out << fmt::format("{},{},{:.10g},{:.10g},{},{:.10g},{:.10g},{},{}\n", t.player_type,
                         to_string(kVictoryPaths[p]), s.mean, s.sd, t.n_games, s.test.statistic, s.test.p_value,
                         s.test.degenerate ? 1 : 0, t.dominant == kVictoryPaths[p] ? 1 : 0);
    }
  }
}

void write_commitment_csv(std::ostream& out, const std::vector<CommitmentRow>& rows) {
  out << "type,dominant_path,share,baseline_share,delta,welch_t,df,p_value,degenerate\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{}\n", r.player_type,
                       to_string(r.dominant), r.share, r.baseline_share, r.delta, r.test.statistic, r.test.df,
                       r.test.p_value, r.test.degenerate ? 1 : 0);
  }
}

void write_pivots_csv(std::ostream& out, const PivotReport& report) {
  out << "game_id,seat_id,type,turn,from,to,win_prob\n";
  for (const auto& e : report.events) {
    out << fmt::format("{},{},{},{},{},{},{}\n", e.game_id, e.seat_id, e.player_type, e.turn, to_string(e.from),
                       to_string(e.to), std::isnan(e.win_prob) ? std::string() : fmt::format("{:.10g}", e.win_prob));
  }
}

void write_flows_csv(std::ostream& out, const std::map<std::string, FlowMatrix>& flows) {
  out << "type,from,to,count,rate,mean_win_prob,games\n";
  for (const auto& [type, m] : flows) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (i == j) continue;
        const double w = m.win_prob[i][j];
        out << fmt::format("{},{},{},{},{:.10g},{},{}\n", type, to_string(kVictoryPaths[i]),
                           to_string(kVictoryPaths[j]), m.counts[i][j], m.rate[i][j],
                           std::isnan(w) ? std::string() : fmt::format("{:.10g}", w), m.games);
      }
    }
  }
}

std::string profile_summary_json(const AllocationProfile& profile, const std::vector<CommitmentRow>& commitment,
                                 const PivotReport& pivots, const FlowSimilarity* similarity,
                                 const std::vector<BestStrategy>& best) {
  nlohmann::ordered_json j;
  j["reference_win_probability"] = kEightPlayerBaseRate;
  auto& types = j["types"];
  types = nlohmann::ordered_json::object();
  for (const auto& t : profile.types) {
    nlohmann::ordered_json jt;
    jt["games"] = t.n_games;
    jt["dominant_path"] = to_string(t.dominant);
    for (std::size_t p = 0; p < 4; ++p) jt["allocation"][std::string(to_string(kVictoryPaths[p]))] = t.paths[p].mean;
    if (auto it = pivots.frequency.find(t.player_type); it != pivots.frequency.end()) {
      jt["pivots_per_game"] = it->second.per_game();
    }
    types[t.player_type] = std::move(jt);
  }
  for (const auto& c : commitment) {
    auto& jt = types[c.player_type];
    jt["commitment"] = {{"share", c.share},
                        {"delta", c.delta},
                        {"welch_t", finite_or_null(c.test.statistic)},
                        {"p_value", finite_or_null(c.test.p_value)},
                        {"degenerate", c.test.degenerate}};
  }
  for (const auto& b : best) {
    auto& jt = types[b.player_type];
    jt["most_chosen"] = {{"path", to_string(b.most_chosen.path)}, {"value", b.most_chosen.value}};
    jt["most_pivoted_to"] = {{"path", to_string(b.most_pivoted_to.path)}, {"value", b.most_pivoted_to.value}};
    if (b.best_elo) {
      jt["best_elo"] = {{"path", to_string(b.best_elo->path)}, {"value", b.best_elo->value}};
    } else {
      jt["best_elo"] = nullptr;
    }
  }
  if (similarity != nullptr) {
    j["flow_similarity"] = {{"within_mean", finite_or_null(similarity->within_mean)},
                            {"cross_mean", finite_or_null(similarity->cross_mean)},
                            {"pairs", similarity->pairs.size()},
                            {"skipped", similarity->skipped}};
  }
  return j.dump(1);
}

}  // namespace progeval
