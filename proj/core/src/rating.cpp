#include "progeval/rating.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "progeval/error.hpp"
#include "progeval/parallel.hpp"
#include "progeval/random.hpp"
#include "progeval/stats.hpp"

namespace progeval {
namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kEloScale = 400.0 / std::numbers::ln10;

void recompute_relative(std::span<StandingRecord> game) {
  double mx = 0.0;
  for (const auto& r : game) mx = std::max(mx, r.weighted_standing);
  for (auto& r : game) {
    r.relative_standing = mx > 0 ? r.weighted_standing / mx : 1.0;
    r.revised_logit = 0.0;
    r.revised_standing = r.relative_standing;
  }
}

/// Index ranges of consecutive records sharing a game_id.
std::vector<std::pair<std::size_t, std::size_t>> game_ranges(const std::vector<StandingRecord>& records) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    while (j < records.size() && records[j].game_id == records[i].game_id) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

}  // namespace

std::vector<StandingRecord> aggregate_standing(const Corpus& corpus, const Dataset& d, std::span<const double> probs,
                                               const StandingOptions& o) {
  if (static_cast<int>(probs.size()) != d.rows()) throw Error(ErrorKind::kShapeMismatch, "standing: prediction count");
  std::unordered_map<std::string, int> dataset_game;
  for (int g = 0; g < static_cast<int>(d.games.size()); ++g) dataset_game[d.games[g].game_id] = g;
  std::vector<std::vector<int>> groups_of(d.games.size());
  for (int g = 0; g < static_cast<int>(d.groups.size()); ++g) groups_of[d.groups[g].game].push_back(g);

  std::vector<StandingRecord> out;
  for (int gi = 0; gi < static_cast<int>(corpus.size()); ++gi) {
    const auto& game = corpus[gi];
    auto it = dataset_game.find(game.game_id);
    if (it == dataset_game.end()) continue;
    const int n = game.num_seats();
    std::vector<double> num(static_cast<std::size_t>(n), 0.0);
    double wsum = 0.0;
    int covered = 0;
    std::vector<int> used;
    for (int g : groups_of[it->second]) {
      const auto& span = d.groups[g];
      bool complete = true;
      for (int i = 0; i < span.size; ++i) complete = complete && !std::isnan(probs[span.begin + i]);
      if (!complete) continue;
      ++covered;
      used.push_back(g);
    }
    const double coverage = game.snapshots.empty() ? 0.0 : static_cast<double>(covered) / game.snapshots.size();
    if (covered == 0 || coverage < o.min_coverage) {
      throw Error(ErrorKind::kMissingTurns,
                  fmt::format("{}: predictions cover {} of {} turns", game.game_id, covered, game.snapshots.size()));
    }
    std::vector<double> weights;
    for (int g : used) weights.push_back(std::pow(d.groups[g].turn_progress, o.progress_exponent));
    const bool uniform = std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0;
    for (std::size_t k = 0; k < used.size(); ++k) {
      const auto& span = d.groups[used[k]];
      const double w = uniform ? 1.0 : weights[k];
      wsum += w;
      for (int i = 0; i < span.size; ++i) {
        const int seat = d.seat[span.begin + i];
        if (seat < 0 || seat >= n) throw Error(ErrorKind::kMissingSeatInSnapshot, game.game_id);
        num[seat] += w * probs[span.begin + i];
      }
    }
    const std::size_t first = out.size();
    for (int s = 0; s < n; ++s) {
      StandingRecord r;
      r.game_id = game.game_id;
      r.game_order = gi;
      r.seat_id = s;
      r.player_type = game.seats[s].player_type;
      r.civilization = game.seats[s].civilization;
      r.is_winner = s == game.winner_seat;
      r.weighted_standing = num[s] / wsum;
      out.push_back(r);
    }
    recompute_relative(std::span(out).subspan(first, static_cast<std::size_t>(n)));
  }
  return out;
}

CorrectionSummary winner_correction(std::vector<StandingRecord>& records) {
  CorrectionSummary s;
  for (const auto& [b, e] : game_ranges(records)) {
    ++s.games;
    double mx = 0.0;
    for (std::size_t i = b; i < e; ++i) mx = std::max(mx, records[i].weighted_standing);
    for (std::size_t i = b; i < e; ++i) {
      auto& r = records[i];
      if (r.is_winner && r.weighted_standing < mx) {
        r.weighted_standing = mx;
        r.winner_corrected = true;
        ++s.corrected;
        recompute_relative(std::span(records).subspan(b, e - b));
        break;
      }
    }
  }
  return s;
}

OlsResult ols_fit(const RowMatrix& x, std::span<const double> y, double ridge) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw Error(ErrorKind::kShapeMismatch, "ols: rows");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  Eigen::MatrixXd xtx = x.transpose() * x;
  xtx.diagonal().array() += ridge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  const Eigen::VectorXd beta = ldlt.solve(x.transpose() * yv);
  const Eigen::VectorXd resid = yv - x * beta;
  OlsResult r;
  r.n = static_cast<int>(n);
  r.residual_variance = n > p ? resid.squaredNorm() / static_cast<double>(n - p) : 0.0;
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  r.beta.assign(beta.data(), beta.data() + p);
  for (Eigen::Index j = 0; j < p; ++j) r.se.push_back(std::sqrt(std::max(0.0, r.residual_variance * inv(j, j))));
  return r;
}

std::optional<CivEffect> CivAdjustResult::effect(const std::string& civ) const {
  for (const auto& e : effects) {
    if (e.civilization == civ) return e;
  }
  return std::nullopt;
}

CivAdjustResult civ_adjust(std::vector<StandingRecord>& records, double clip) {
  CivAdjustResult res;
  std::map<std::string, int> counts;
  for (const auto& r : records) ++counts[r.civilization];
  std::vector<double> y;
  for (const auto& r : records) {
    const double s = std::clamp(r.relative_standing, clip, 1.0 - clip);
    y.push_back(std::log(s / (1.0 - s)));
  }
  int best = -1;
  for (const auto& [civ, n] : counts) {
    if (n > best) {
      best = n;
      res.reference = civ;
    }
  }
  if (counts.size() < 2) {
    res.single_civ = true;
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].revised_logit = y[i];
      records[i].revised_standing = logistic(y[i]);
    }
    if (!counts.empty()) res.effects.push_back({res.reference, 0.0, 0.0, best});
    return res;
  }
  std::map<std::string, int> column;
  for (const auto& [civ, n] : counts) {
    if (civ != res.reference) column.emplace(civ, static_cast<int>(column.size()) + 1);
  }
  RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(column.size()) + 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = 1.0;
    auto it = column.find(records[i].civilization);
    if (it != column.end()) x(static_cast<Eigen::Index>(i), it->second) = 1.0;
  }
  const auto fit = ols_fit(x, y);
  res.intercept = fit.beta[0];
  for (const auto& [civ, n] : counts) {
    auto it = column.find(civ);
    if (it == column.end()) {
      res.effects.push_back({civ, 0.0, 0.0, n});
    } else {
      res.effects.push_back({civ, fit.beta[it->second], fit.se[it->second], n});
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = column.find(records[i].civilization);
    const double c = it == column.end() ? 0.0 : fit.beta[it->second];
    records[i].revised_logit = y[i] - c;
    records[i].revised_standing = logistic(records[i].revised_logit);
  }
  return res;
}

const RatingEntry* RatingTable::find(const std::string& type) const {
  for (const auto& e : entries) {
    if (e.player_type == type) return &e;
  }
  return nullptr;
}

double RatingTable::elo(const std::string& type) const {
  const auto* e = find(type);
  if (e == nullptr) throw Error(ErrorKind::kKeyMismatch, "no rating for " + type);
  return e->elo;
}

std::map<std::string, double> RatingTable::elo_map() const {
  std::map<std::string, double> m;
  for (const auto& e : entries) m[e.player_type] = e.elo;
  return m;
}

namespace {

struct GameComparisons {
  std::string game_id;
  std::vector<int> types;  // distinct type indices present
  // (a, b, weight, wins of a) with a < b
  std::vector<std::tuple<int, int, double, double>> pairs;
};

std::vector<GameComparisons> per_game_comparisons(const std::vector<StandingRecord>& records,
                                                  const std::vector<std::string>& types) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < types.size(); ++i) index[types[i]] = static_cast<int>(i);
  std::vector<GameComparisons> out;
  for (const auto& [b, e] : game_ranges(records)) {
    GameComparisons gc;
    gc.game_id = records[b].game_id;
    std::map<int, int> mult;
    for (std::size_t i = b; i < e; ++i) ++mult[index.at(records[i].player_type)];
    for (const auto& [t, m] : mult) gc.types.push_back(t);
    std::map<std::pair<int, int>, std::pair<double, double>> acc;  // weight, wins of first
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t j = i + 1; j < e; ++j) {
        int ta = index.at(records[i].player_type);
        int tb = index.at(records[j].player_type);
        if (ta == tb) continue;
        double ri = records[i].revised_standing;
        double rj = records[j].revised_standing;
        if (ta > tb) {
          std::swap(ta, tb);
          std::swap(ri, rj);
        }
        const double w = 1.0 / (mult[ta] * mult[tb]);
        const double total = ri + rj;
        const double frac = total > 0 ? ri / total : 0.5;
        auto& slot = acc[{ta, tb}];
        slot.first += w;
        slot.second += w * frac;
      }
    }
    for (const auto& [key, v] : acc) gc.pairs.emplace_back(key.first, key.second, v.first, v.second);
    out.push_back(std::move(gc));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.game_id < y.game_id; });
  return out;
}

std::vector<std::string> type_list(const std::vector<StandingRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.player_type);
  return {s.begin(), s.end()};
}

Comparisons sum_comparisons(const std::vector<std::string>& types, const std::vector<GameComparisons>& games,
                            std::span<const int> picks) {
  Comparisons c;
  c.types = types;
  const std::size_t k = types.size();
  c.n.assign(k, std::vector<double>(k, 0.0));
  c.wins.assign(k, 0.0);
  c.games.assign(k, 0);
  for (int gi : picks) {
    const auto& g = games[gi];
    for (int t : g.types) ++c.games[t];
    for (const auto& [a, b, w, wa] : g.pairs) {
      c.n[a][b] += w;
      c.n[b][a] += w;
      c.wins[a] += wa;
      c.wins[b] += w - wa;
    }
  }
  return c;
}

std::vector<int> iota_picks(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double bt_log_likelihood(const Comparisons& c, const std::vector<double>& pi) {
  double ll = 0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    if (c.wins[a] > 0) ll += c.wins[a] * std::log(pi[a]);
    for (std::size_t b = a + 1; b < pi.size(); ++b) {
      if (c.n[a][b] > 0) ll -= c.n[a][b] * std::log(pi[a] + pi[b]);
    }
  }
  return ll;
}

}  // namespace

Comparisons build_comparisons(const std::vector<StandingRecord>& records) {
  const auto types = type_list(records);
  const auto games = per_game_comparisons(records, types);
  const auto picks = iota_picks(games.size());
  return sum_comparisons(types, games, picks);
}

RatingTable bt_fit(const Comparisons& c, const BtOptions& o) {
  const std::size_t k = c.types.size();
  if (k == 0) throw Error(ErrorKind::kDisconnectedGraph, "no player types");
  // Connectivity over types that have comparisons.
  std::vector<std::size_t> parent(k);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      if (c.n[a][b] > 0) parent[root(a)] = root(b);
    }
  }
  std::map<std::size_t, std::vector<std::string>> components;
  for (std::size_t a = 0; a < k; ++a) components[root(a)].push_back(c.types[a]);
  if (components.size() > 1) {
    std::string msg;
    for (const auto& [r, names] : components) msg += (msg.empty() ? "{" : " {") + fmt::format("{}", fmt::join(names, ",")) + "}";
    throw Error(ErrorKind::kDisconnectedGraph, msg);
  }

  RatingTable t;
  t.anchor = o.anchor;
  t.anchor_elo = o.anchor_elo;
  std::vector<double> pi(k, 1.0);
  std::vector<double> next(k);
  double last_ll = bt_log_likelihood(c, pi);
  bool converged = k == 1;
  int it = 0;
  while (!converged && it < o.max_iter) {
    ++it;
    for (std::size_t a = 0; a < k; ++a) {
      double denom = 0;
      for (std::size_t b = 0; b < k; ++b) {
        if (b != a && c.n[a][b] > 0) denom += c.n[a][b] / (pi[a] + pi[b]);
      }
      next[a] = denom > 0 ? std::max(c.wins[a], 1e-300) / denom : pi[a];
    }
    double log_gm = 0;
    for (double v : next) log_gm += std::log(v);
    const double gm = std::exp(log_gm / static_cast<double>(k));
    double change = 0;
    for (std::size_t a = 0; a < k; ++a) {
      next[a] /= gm;
      change = std::max(change, std::abs(next[a] - pi[a]) / pi[a]);
    }
    pi.swap(next);
    converged = change < o.tol;
    if (it % 100 == 0 || converged || o.likelihood_trace != nullptr) {
      const double ll = bt_log_likelihood(c, pi);
      if (ll < last_ll - 1e-9 * std::abs(last_ll)) t.likelihood_monotone = false;
      last_ll = ll;
      if (o.likelihood_trace != nullptr) o.likelihood_trace->push_back(ll);
    }
  }
  if (!converged) throw Error(ErrorKind::kNonConvergence, fmt::format("Bradley-Terry after {} iterations", it));
  t.iterations = it;
  t.log_likelihood = last_ll;

  int anchor = -1;
  for (std::size_t a = 0; a < k; ++a) {
    if (c.types[a] == o.anchor) anchor = static_cast<int>(a);
  }
  t.anchor_present = anchor >= 0;
  std::vector<double> elo(k);
  for (std::size_t a = 0; a < k; ++a) elo[a] = kEloScale * std::log(pi[a]);
  const double shift = anchor >= 0 ? o.anchor_elo - elo[anchor]
                                   : o.anchor_elo - std::accumulate(elo.begin(), elo.end(), 0.0) / static_cast<double>(k);
  for (std::size_t a = 0; a < k; ++a) {
    RatingEntry e;
    e.player_type = c.types[a];
    e.worth = anchor >= 0 ? pi[a] / pi[anchor] : pi[a];
    e.elo = static_cast<int>(a) == anchor ? o.anchor_elo : elo[a] + shift;
    e.ci_low = e.ci_high = e.elo;
    e.n_games = c.games[a];
    t.entries.push_back(e);
  }
  return t;
}

RatingTable bt_fit(const std::vector<StandingRecord>& records, const BtOptions& o) {
  return bt_fit(build_comparisons(records), o);
}

RatingTable bootstrap_inference(const std::vector<StandingRecord>& records, const BtOptions& bt_in,
                                const BootstrapOptions& o) {
  BtOptions bt = bt_in;
  bt.likelihood_trace = nullptr;
  const auto types = type_list(records);
  const auto games = per_game_comparisons(records, types);
  RatingTable table = bt_fit(sum_comparisons(types, games, iota_picks(games.size())), bt);
  if (o.resamples < 1) return table;
  const bool need_anchor = table.anchor_present;

  // samples[r] holds one ELO per type, empty when the resample was dropped.
  std::vector<std::vector<double>> samples(static_cast<std::size_t>(o.resamples));
  parallel_for(samples.size(), [&](std::size_t r) {
    std::vector<int> picks(games.size());
    for (int attempt = 0; attempt < o.max_redraws; ++attempt) {
      Rng rng(derive_seed(o.seed, 0xB007, r, static_cast<std::uint64_t>(attempt)));
      for (auto& p : picks) p = static_cast<int>(rng.below(games.size()));
      const auto c = sum_comparisons(types, games, picks);
      if (std::any_of(c.games.begin(), c.games.end(), [](int n) { return n == 0; })) continue;
      try {
        const auto fit = bt_fit(c, bt);
        if (need_anchor && !fit.anchor_present) continue;
        std::vector<double> elos;
        for (const auto& e : fit.entries) elos.push_back(e.elo);
        samples[r] = std::move(elos);
        return;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDisconnectedGraph) throw;
      }
    }
  });

  table.bootstrap_resamples = o.resamples;
  const int kept = static_cast<int>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return !s.empty(); }));
  table.bootstrap_dropped = o.resamples - kept;
  if (kept == 0) return table;
  for (std::size_t a = 0; a < table.entries.size(); ++a) {
    std::vector<double> v;
    for (const auto& s : samples) {
      if (!s.empty()) v.push_back(s[a]);
    }
    auto& e = table.entries[a];
    e.ci_low = stats::percentile(v, 0.025);
    e.ci_high = stats::percentile(v, 0.975);
    const double n = static_cast<double>(v.size());
    const double ge = static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x >= bt.anchor_elo; })) / n;
    const double le = static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x <= bt.anchor_elo; })) / n;
    e.p_vs_anchor = std::clamp(2.0 * std::min(ge, le), 2.0 / o.resamples, 1.0);
  }
  return table;
}

AblationCurve convergence_ablation(const std::vector<StandingRecord>& records, const std::string& target,
                                   const BtOptions& bt_in, const BootstrapOptions& boot) {
  BtOptions bt = bt_in;
  bt.likelihood_trace = nullptr;
  AblationCurve curve;
  curve.target = target;
  std::vector<StandingRecord> base;
  std::vector<std::pair<int, std::pair<std::size_t, std::size_t>>> target_games;
  for (const auto& range : game_ranges(records)) {
    bool has_target = false;
    for (std::size_t i = range.first; i < range.second; ++i) has_target = has_target || records[i].player_type == target;
    if (has_target) {
      target_games.emplace_back(records[range.first].game_order, range);
    } else {
      curve.base_games.push_back(records[range.first].game_id);
      base.insert(base.end(), records.begin() + static_cast<std::ptrdiff_t>(range.first),
                  records.begin() + static_cast<std::ptrdiff_t>(range.second));
    }
  }
  if (target_games.size() < 2) throw Error(ErrorKind::kInsufficientGames, target + " appears in fewer than 2 games");
  if (base.empty()) throw Error(ErrorKind::kDisconnectedGraph, "every game contains " + target);
  bt_fit(base, bt);  // the base set must be connected on its own
  std::stable_sort(target_games.begin(), target_games.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::vector<StandingRecord>> step_records;
  std::vector<StandingRecord> acc = base;
  for (const auto& [order, range] : target_games) {
    acc.insert(acc.end(), records.begin() + static_cast<std::ptrdiff_t>(range.first),
               records.begin() + static_cast<std::ptrdiff_t>(range.second));
    step_records.push_back(acc);
  }
  curve.steps.resize(step_records.size());
  for (std::size_t k = 0; k < step_records.size(); ++k) {
    BootstrapOptions b = boot;
    b.seed = derive_seed(boot.seed, k + 1);
    const auto table = bootstrap_inference(step_records[k], bt, b);
    const auto* e = table.find(target);
    curve.steps[k] = {static_cast<int>(k) + 1, records[target_games[k].second.first].game_id, e->elo, e->ci_low,
                      e->ci_high};
  }
  return curve;
}

std::map<std::pair<std::string, std::string>, HeadToHead> head_to_head(const std::vector<StandingRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& [b, e] : game_ranges(records)) {
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t j = b; j < e; ++j) {
        if (i == j) continue;
        const double ri = records[i].revised_standing;
        const double rj = records[j].revised_standing;
        auto& slot = acc[{records[i].player_type, records[j].player_type}];
        slot.first += ri > rj ? 1.0 : (ri == rj ? 0.5 : 0.0);
        ++slot.second;
      }
    }
  }
  std::map<std::pair<std::string, std::string>, HeadToHead> out;
  for (const auto& [k, v] : acc) out[k] = {v.first / v.second, v.second};
  return out;
}

std::vector<StandingRecord> relabel_records(const std::vector<StandingRecord>& records, const std::string& anchor,
                                            const std::map<std::pair<std::string, int>, std::string>& label_of) {
  std::vector<StandingRecord> out = records;
  for (auto& r : out) {
    if (r.player_type == anchor) continue;
    auto it = label_of.find({r.game_id, r.seat_id});
    if (it == label_of.end()) throw Error(ErrorKind::kKeyMismatch, fmt::format("no label for {} seat {}", r.game_id, r.seat_id));
    r.player_type += "@" + it->second;
  }
  return out;
}

void write_standings_csv(std::ostream& out, const std::vector<StandingRecord>& records) {
  out << "game_id,seat_id,player_type,civilization,is_winner,weighted_standing,relative_standing,winner_corrected,"
         "revised_logit,revised_standing\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{:.10g},{:.10g},{},{:.10g},{:.10g}\n", r.game_id, r.seat_id, r.player_type,
                       r.civilization, r.is_winner ? 1 : 0, r.weighted_standing, r.relative_standing,
                       r.winner_corrected ? 1 : 0, r.revised_logit, r.revised_standing);
  }
}

void write_ratings_csv(std::ostream& out, const RatingTable& t) {
  out << "type,elo,ci_low,ci_high,p,n_games,worth\n";
  for (const auto& e : t.entries) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6g},{},{:.10g}\n", e.player_type, e.elo, e.ci_low, e.ci_high,
                       e.p_vs_anchor, e.n_games, e.worth);
  }
}

void write_civ_effects_csv(std::ostream& out, const CivAdjustResult& r) {
  out << "civilization,coef,se,n,reference\n";
  for (const auto& e : r.effects) {
    out << fmt::format("{},{:.10g},{:.10g},{},{}\n", e.civilization, e.coef, e.se, e.n,
                       e.civilization == r.reference ? 1 : 0);
  }
}

void write_ablation_csv(std::ostream& out, const AblationCurve& c) {
  out << "k,game_id,elo,ci_low,ci_high\n";
  for (const auto& s : c.steps) {
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", s.k, s.game_id, s.elo, s.ci_low, s.ci_high);
  }
}

void write_head_to_head_csv(std::ostream& out, const std::map<std::pair<std::string, std::string>, HeadToHead>& h2h) {
  out << "type,opponent,probability,comparisons\n";
  for (const auto& [k, v] : h2h) out << fmt::format("{},{},{:.10g},{}\n", k.first, k.second, v.probability, v.comparisons);
}

}  // namespace progeval
