#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "progeval/arena.hpp"
#include "progeval/error.hpp"

using namespace progeval;

namespace {

ArenaConfig flat_arena(int types, int players, int games) {
  ArenaConfig c;
  c.games = games;
  c.players = players;
  c.max_turn = 20;
  c.snapshot_every = 10;
  for (int i = 0; i < types; ++i) c.types.push_back({"T" + std::to_string(i), 0.0});
  for (int i = 0; i < players; ++i) c.civs.push_back({"C" + std::to_string(i), 0.0});
  return c;
}

int type_seat(const GameRecord& g, const std::string& type) {
  for (const auto& s : g.seats) {
    if (s.player_type == type) return s.seat_id;
  }
  return -1;
}

}  // namespace

TEST(Arena, Deterministic) {
  const auto a = generate(standard_arena(6, 3));
  const auto b = generate(standard_arena(6, 3));
  EXPECT_EQ(a.corpus, b.corpus);
  EXPECT_EQ(a.truth.to_json(), b.truth.to_json());
  const auto c = generate(standard_arena(6, 4));
  EXPECT_NE(a.corpus, c.corpus);
}

TEST(Arena, SnapshotScheduleAndShape) {
  auto cfg = standard_arena(2, 1);
  cfg.max_turn = 30;
  const auto out = generate(cfg);
  const auto& g = out.corpus[0];
  EXPECT_EQ(g.num_seats(), 8);
  std::vector<int> turns;
  for (const auto& s : g.snapshots) turns.push_back(s.turn);
  EXPECT_EQ(turns, (std::vector<int>{4, 8, 12, 16, 20, 24, 28, 30}));
  // Round-robin seating: every type once per 8-seat game.
  for (const auto& t : cfg.types) EXPECT_GE(type_seat(g, t.name), 0);
  const auto j = nlohmann::json::parse(out.truth.to_json());
  EXPECT_EQ(j.at("planted_civ"), "Civ00");
  EXPECT_EQ(j.at("types").size(), 8u);
  EXPECT_EQ(j.at("games").size(), 2u);
}

TEST(Arena, Validation) {
  auto expect_invalid = [](const ArenaConfig& c) {
    try {
      c.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    }
  };
  auto c = standard_arena(5, 1);
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.players = 1;
  expect_invalid(bad);
  bad = c;
  bad.beta = 0;
  expect_invalid(bad);
  bad = c;
  bad.players = 13;
  expect_invalid(bad);
  bad = c;
  bad.victory_weights = {0, 0, 0, 0, 0};
  expect_invalid(bad);
  bad = c;
  bad.types.clear();
  expect_invalid(bad);
  bad = c;
  bad.games = 0;
  expect_invalid(bad);
}

TEST(Arena, PursuitTemplatesAreStochastic) {
  const auto cfg = standard_arena(1, 1);
  for (const auto& t : cfg.types) {
    EXPECT_NEAR(std::accumulate(t.pursuit.initial.begin(), t.pursuit.initial.end(), 0.0), 1.0, 1e-12);
    for (const auto& row : t.pursuit.transition) {
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12) << t.name;
    }
  }
  const auto d = PursuitTemplate::directed({0.25, 0.25, 0.25, 0.25}, 0.85, {1, 2, 3, 0}, 0.8);
  EXPECT_DOUBLE_EQ(d.transition[0][0], 0.85);
  EXPECT_NEAR(d.transition[0][1], 0.12, 1e-12);
  EXPECT_NEAR(d.transition[0][2], 0.015, 1e-12);
  const auto self = PursuitTemplate::directed({0.25, 0.25, 0.25, 0.25}, 0.85, {1, 1, 1, 1}, 0.8);
  EXPECT_NEAR(self.transition[1][0], 0.05, 1e-12);
}

TEST(Arena, EqualTypesGiveUniformWinningSeats) {
  auto cfg = flat_arena(8, 8, 2000);
  const auto out = generate(cfg);
  std::vector<double> seat(8, 0.0), type(8, 0.0);
  for (const auto& g : out.corpus) {
    seat[g.winner_seat] += 1;
    type[std::stoi(g.seats[g.winner_seat].player_type.substr(1))] += 1;
  }
  const boost::math::chi_squared dist(7);
  const double critical = boost::math::quantile(dist, 0.999);
  for (const auto* counts : {&seat, &type}) {
    double chi2 = 0;
    for (double c : *counts) chi2 += (c - 250.0) * (c - 250.0) / 250.0;
    EXPECT_LT(chi2, critical);
  }
}

TEST(Arena, TwoTypeWinRateMatchesLogistic) {
  auto cfg = flat_arena(2, 2, 4000);
  cfg.types[0].theta = 1.0;
  cfg.latent_noise = 0.0;
  cfg.beta = 1.0;
  const auto out = generate(cfg);
  int wins = 0;
  for (const auto& g : out.corpus) wins += g.seats[g.winner_seat].player_type == "T0";
  const double expected = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(expected, 0.731, 1e-3);
  EXPECT_NEAR(wins / 4000.0, expected, 0.025);
}

TEST(Arena, LargeBetaPicksStrongest) {
  auto cfg = flat_arena(4, 4, 200);
  for (int i = 0; i < 4; ++i) cfg.types[i].theta = 0.5 * i;
  cfg.latent_noise = 0.0;
  cfg.beta = 50.0;
  const auto out = generate(cfg);
  for (std::size_t k = 0; k < out.corpus.size(); ++k) {
    const auto& lat = out.truth.games[k].final_latent;
    const auto best = std::max_element(lat.begin(), lat.end()) - lat.begin();
    EXPECT_EQ(out.corpus[k].winner_seat, best);
    EXPECT_EQ(out.corpus[k].seats[best].player_type, "T3");
  }
}
