#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "progeval/error.hpp"
#include "progeval/profiler.hpp"
#include "support/toy.hpp"

using namespace progeval;
using progeval::testing::set_pursuits;
using progeval::testing::toy_game;

namespace {

constexpr auto D = VictoryPath::kDomination;
constexpr auto S = VictoryPath::kScience;
constexpr auto C = VictoryPath::kCulture;
constexpr auto P = VictoryPath::kDiplomatic;

std::vector<int> unit_turns(int n) {
  std::vector<int> t;
  for (int i = 0; i < n; ++i) t.push_back(i);
  return t;
}

// Ten unit-length snapshots: `science` tenths on Science, the rest
// alternating Culture and Diplomatic.
std::vector<VictoryPath> tenths(int science) {
  std::vector<VictoryPath> p;
  for (int i = 0; i < 10; ++i) p.push_back(i < science ? S : ((i - science) % 2 == 0 ? C : P));
  return p;
}

GameRecord two_seat(const std::string& id, const std::string& a, const std::string& b, int sa, int sb) {
  auto g = toy_game(id, 2, unit_turns(10));
  g.seats[0].player_type = a;
  g.seats[1].player_type = b;
  set_pursuits(g, 0, tenths(sa));
  set_pursuits(g, 1, tenths(sb));
  return g;
}

double mean(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return s / x.size();
}

double var(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / (x.size() - 1);
}

double pearson(const std::array<double, 12>& a, const std::array<double, 12>& b) {
  double ma = 0, mb = 0;
  for (int i = 0; i < 12; ++i) {
    ma += a[i] / 12;
    mb += b[i] / 12;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 12; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(TimeShares, DurationWeighted) {
  auto g = toy_game("a", 1, {0, 10, 40});
  set_pursuits(g, 0, {D, S, C});
  const auto s = seat_time_shares(g, 0);
  EXPECT_DOUBLE_EQ(s[0], 10.0 / 41);
  EXPECT_DOUBLE_EQ(s[1], 30.0 / 41);
  EXPECT_DOUBLE_EQ(s[2], 1.0 / 41);
  EXPECT_DOUBLE_EQ(s[3], 0.0);
  EXPECT_EQ(dominant_path(s), S);
  EXPECT_EQ(dominant_path({0.3, 0.3, 0.2, 0.2}), D);
  EXPECT_EQ(dominant_path({0.1, 0.2, 0.35, 0.35}), C);
}

TEST(TimeAllocation, OneSampleTestAgainstQuarter) {
  Corpus corpus{two_seat("g1", "M", "VPAI", 8, 5), two_seat("g2", "M", "VPAI", 6, 4)};
  const auto prof = time_allocation(corpus);
  const auto* m = prof.find("M");
  ASSERT_NE(m, nullptr);
  EXPECT_EQ(m->n_games, 2);
  EXPECT_EQ(m->dominant, S);
  const std::vector<double> x{0.8, 0.6};
  EXPECT_NEAR(m->paths[1].mean, 0.7, 1e-12);
  EXPECT_NEAR(m->paths[1].sd, std::sqrt(var(x)), 1e-12);
  const double t = (0.7 - 0.25) / std::sqrt(var(x) / 2);
  EXPECT_NEAR(m->paths[1].test.statistic, t, 1e-9);
  EXPECT_NEAR(t, 4.5, 1e-9);
  EXPECT_EQ(m->paths[1].test.df, 1.0);
  double total = 0;
  for (const auto& p : m->paths) total += p.mean;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(TimeAllocation, EmptyCorpusThrows) {
  try {
    time_allocation({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoPursuitData);
  }
}

TEST(Commitment, WelchAgainstBaseline) {
  Corpus corpus{two_seat("g1", "M", "VPAI", 8, 5), two_seat("g2", "M", "VPAI", 6, 4),
                two_seat("g3", "VPAI", "X", 6, 1), two_seat("g4", "VPAI", "X", 5, 1)};
  const auto rows = commitment(time_allocation(corpus), "VPAI");
  const CommitmentRow* m = nullptr;
  for (const auto& r : rows) {
    if (r.player_type == "M") m = &r;
  }
  ASSERT_NE(m, nullptr);
  const std::vector<double> a{0.8, 0.6}, b{0.5, 0.4, 0.6, 0.5};
  const double va = var(a) / 2, vb = var(b) / 4;
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / 1 + vb * vb / 3);
  EXPECT_EQ(m->dominant, S);
  EXPECT_NEAR(m->share, 0.7, 1e-12);
  EXPECT_NEAR(m->baseline_share, 0.5, 1e-12);
  EXPECT_NEAR(m->delta, 0.2, 1e-12);
  EXPECT_NEAR(m->test.statistic, t, 1e-9);
  EXPECT_NEAR(m->test.df, df, 1e-9);
  EXPECT_THROW(commitment(time_allocation(corpus), "Nobody"), Error);
}

TEST(Pivots, DetectsChangesAfterMinTurn) {
  auto g = toy_game("p", 1, {10, 20, 30, 40, 50});
  set_pursuits(g, 0, {D, D, S, S, C});
  const auto r = detect_pivots({g});
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0].turn, 30);
  EXPECT_EQ(r.events[0].from, D);
  EXPECT_EQ(r.events[0].to, S);
  EXPECT_EQ(r.events[1].turn, 50);
  EXPECT_EQ(r.events[1].from, S);
  EXPECT_EQ(r.events[1].to, C);
  EXPECT_TRUE(std::isnan(r.events[0].win_prob));
  EXPECT_EQ(r.frequency.at("P0").games, 1);
  EXPECT_EQ(r.frequency.at("P0").events, 2);

  auto early = toy_game("e", 1, {10, 20});
  set_pursuits(early, 0, {D, S});
  EXPECT_TRUE(detect_pivots({early}).events.empty());
  auto boundary = toy_game("b", 1, {10, 25, 26});
  set_pursuits(boundary, 0, {D, S, C});
  const auto rb = detect_pivots({boundary});
  ASSERT_EQ(rb.events.size(), 1u);
  EXPECT_EQ(rb.events[0].turn, 26);
}

TEST(Pivots, WinProbabilityFromLatestPrediction) {
  auto g = toy_game("p", 1, {10, 20, 30, 40, 50});
  set_pursuits(g, 0, {D, D, S, S, C});
  PredictionTable t;
  t.rows = {{"p", 30, 0, 0.4, true}, {"p", 40, 0, 0.7, true}, {"p", 20, 0, 0.1, true}};
  const auto r = detect_pivots({g}, &t);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_DOUBLE_EQ(r.events[0].win_prob, 0.4);
  EXPECT_DOUBLE_EQ(r.events[1].win_prob, 0.7);
}

TEST(Flows, CountsPerGameAndDuplicationInsensitive) {
  auto g1 = toy_game("a", 2, {10, 30, 40});
  set_pursuits(g1, 0, {D, S, C});
  set_pursuits(g1, 1, {P, P, D});
  auto g2 = toy_game("b", 2, {10, 30, 40});
  set_pursuits(g2, 0, {D, S, S});
  Corpus corpus{g1, g2};
  const auto flows = pivot_flows(detect_pivots(corpus));
  const auto& f = flows.at("P0");
  EXPECT_EQ(f.games, 2);
  EXPECT_EQ(f.counts[0][1], 2);
  EXPECT_EQ(f.counts[1][2], 1);
  EXPECT_DOUBLE_EQ(f.rate[0][1], 1.0);
  EXPECT_DOUBLE_EQ(f.rate[1][2], 0.5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(f.rate[i][i], 0.0);

  Corpus doubled = corpus;
  for (auto g : corpus) {
    g.game_id += "_copy";
    doubled.push_back(g);
  }
  const auto f2 = pivot_flows(detect_pivots(doubled)).at("P0");
  EXPECT_EQ(f2.games, 4);
  EXPECT_EQ(f2.rate, f.rate);
  EXPECT_EQ(time_allocation(doubled).find("P0")->paths[1].mean, time_allocation(corpus).find("P0")->paths[1].mean);
}

TEST(FlowSimilarity, PearsonAndFamilies) {
  std::map<std::string, FlowMatrix> flows;
  FlowMatrix a, b, c, z;
  a.player_type = "A";
  const double vals[4][4] = {{0, .5, .1, .2}, {.3, 0, .9, .1}, {.05, .4, 0, .6}, {.7, .2, .15, 0}};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      a.rate[i][j] = vals[i][j];
      b.rate[i][j] = 2 * vals[i][j] + 0.1 * (i != j);
      c.rate[i][j] = vals[j][i];
    }
  }
  b.player_type = "B";
  c.player_type = "C";
  z.player_type = "Z";
  flows = {{"A", a}, {"B", b}, {"C", c}, {"Z", z}};
  const auto sim = flow_similarity(flows, {{"A", "f1"}, {"B", "f1"}, {"C", "f2"}, {"Z", "f2"}});
  EXPECT_EQ(sim.skipped, 3);
  ASSERT_EQ(sim.pairs.size(), 3u);
  for (const auto& p : sim.pairs) {
    if (p.a == "A" && p.b == "B") {
      EXPECT_TRUE(p.within);
      EXPECT_NEAR(p.r, 1.0, 1e-12);
    } else {
      EXPECT_FALSE(p.within);
      const auto& other = p.a == "C" ? flows.at(p.b) : flows.at(p.a);
      EXPECT_NEAR(p.r, pearson(other.off_diagonal(), c.off_diagonal()), 1e-12);
    }
  }
  EXPECT_NEAR(sim.within_mean, 1.0, 1e-12);
  EXPECT_NEAR(sim.cross_mean, pearson(a.off_diagonal(), c.off_diagonal()), 1e-12);
}

TEST(BestStrategy, Rules) {
  Corpus corpus{two_seat("g1", "M", "VPAI", 8, 5), two_seat("g2", "M", "VPAI", 6, 4)};
  const auto prof = time_allocation(corpus);
  std::map<VictoryPath, RatingTable> by_path;
  RatingTable sci, cul;
  sci.entries = {{"M", 1.0, 1600, 0, 0, 1, 6}};
  cul.entries = {{"M", 1.0, 1700, 0, 0, 1, 3}};
  by_path[S] = sci;
  by_path[C] = cul;
  const auto best = best_strategy_summary(by_path, prof, {});
  const BestStrategy* m = nullptr;
  for (const auto& b : best) {
    if (b.player_type == "M") m = &b;
  }
  ASSERT_NE(m, nullptr);
  EXPECT_EQ(m->most_chosen.path, S);
  EXPECT_NEAR(m->most_chosen.value, 0.7, 1e-12);
  EXPECT_EQ(m->most_pivoted_to.path, S);
  ASSERT_TRUE(m->best_elo.has_value());
  EXPECT_EQ(m->best_elo->path, S);
  EXPECT_EQ(m->best_elo->value, 1600);

  FlowMatrix f;
  f.player_type = "M";
  f.games = 2;
  f.rate[0][3] = 0.5;
  f.rate[1][3] = 0.5;
  f.rate[3][2] = 0.5;
  const auto best2 = best_strategy_summary({}, prof, {{"M", f}});
  for (const auto& b : best2) {
    if (b.player_type != "M") continue;
    EXPECT_EQ(b.most_pivoted_to.path, P);
    EXPECT_DOUBLE_EQ(b.most_pivoted_to.value, 1.0);
    EXPECT_FALSE(b.best_elo.has_value());
  }
}

TEST(Writers, ProfileJsonParses) {
  Corpus corpus{two_seat("g1", "M", "VPAI", 8, 5), two_seat("g2", "M", "VPAI", 6, 4)};
  const auto prof = time_allocation(corpus);
  const auto json = profile_summary_json(prof, commitment(prof), detect_pivots(corpus), nullptr, {});
  EXPECT_NE(json.find("\"M\""), std::string::npos);
  std::ostringstream out;
  write_allocation_csv(out, prof);
  EXPECT_EQ(out.str().rfind("type,path,mean_share", 0), 0u);
}
