#include "progeval/arena.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "progeval/error.hpp"
#include "progeval/parallel.hpp"
#include "progeval/random.hpp"

namespace progeval {

PursuitTemplate PursuitTemplate::sticky(std::array<double, 4> initial, double stay) {
  PursuitTemplate t;
  t.initial = initial;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) t.transition[i][j] = i == j ? stay : (1.0 - stay) / 3.0;
  }
  return t;
}

PursuitTemplate PursuitTemplate::directed(std::array<double, 4> initial, double stay, std::array<int, 4> favored,
                                          double bias) {
  PursuitTemplate t;
  t.initial = initial;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i == j) {
        t.transition[i][j] = stay;
      } else if (favored[i] == i) {
        t.transition[i][j] = (1.0 - stay) / 3.0;
      } else {
        t.transition[i][j] = (1.0 - stay) * (j == favored[i] ? bias : (1.0 - bias) / 2.0);
      }
    }
  }
  return t;
}

void ArenaConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::kInvalidConfig, "arena: " + why); };
  if (games < 1) fail("games must be >= 1");
  if (players < 2) fail("players must be >= 2");
  if (types.empty()) fail("no player types");
  if (static_cast<int>(civs.size()) < players) fail("fewer civilizations than players");
  if (!(beta > 0)) fail("beta must be > 0");
  if (max_turn < 2 || snapshot_every < 1) fail("turn schedule");
  if (latent_noise < 0 || driver_noise < 0 || group_noise < 0) fail("negative noise scale");
  double wsum = 0;
  for (double w : victory_weights) {
    if (w < 0) fail("negative victory weight");
    wsum += w;
  }
  if (wsum <= 0) fail("victory weights sum to zero");
  for (const auto& t : types) {
    double s = 0;
    for (double p : t.pursuit.initial) s += p;
    if (s <= 0) fail(t.name + ": empty initial pursuit distribution");
    for (const auto& row : t.pursuit.transition) {
      double r = 0;
      for (double p : row) r += p;
      if (r <= 0) fail(t.name + ": empty transition row");
    }
  }
}

namespace {

struct SeatState {
  double x = 0.0;
  std::array<double, kNumFeatureGroups> walk{};  // group-specific random walks
  double score_walk = 0.0;
  int path = 0;
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

RawSignals make_signals(const SeatState& s, double growth, const ArenaConfig& c, double coupling,
                        double latent_scale, Rng& rng) {
  auto u = [&](FeatureGroup g) {
    const double noise = g == c.driver ? c.driver_noise : c.group_noise;
    return s.x + noise * s.walk[static_cast<int>(g)];
  };
  constexpr double k = 0.5;
  auto level = [&](FeatureGroup g, double base) {
    return base * growth * std::exp(k * u(g) + 0.05 * rng.normal());
  };
  auto count = [&](FeatureGroup g, double base) {
    return static_cast<std::int64_t>(std::llround(level(g, base)));
  };
  RawSignals r;
  const double us = coupling * s.x + (1.0 - coupling) * latent_scale * s.score_walk;
  r.score = 100.0 * growth * std::exp(k * us + 0.02 * rng.normal());
  r.technologies = count(FeatureGroup::kScience, 8.0);
  r.science = level(FeatureGroup::kScience, 10.0);
  r.policies = count(FeatureGroup::kCulture, 3.0);
  r.culture = level(FeatureGroup::kCulture, 8.0);
  r.tourism = level(FeatureGroup::kCulture, 2.0);
  r.gold = level(FeatureGroup::kEconomy, 15.0);
  r.production = level(FeatureGroup::kEconomy, 12.0);
  r.cities = std::max<std::int64_t>(1, count(FeatureGroup::kGrowth, 0.8));
  r.food = level(FeatureGroup::kGrowth, 10.0);
  r.population = std::max<std::int64_t>(1, count(FeatureGroup::kGrowth, 5.0));
  r.faith = level(FeatureGroup::kReligion, 5.0);
  r.religion_percentage = clamp01(0.2 * std::exp(k * u(FeatureGroup::kReligion)) + 0.02 * rng.normal());
  r.votes = count(FeatureGroup::kInfluence, 0.4);
  r.minor_allies = count(FeatureGroup::kInfluence, 0.2);
  r.defensive_pacts = count(FeatureGroup::kInfluence, 0.1);
  r.friendships = count(FeatureGroup::kInfluence, 0.2);
  const double uw = u(FeatureGroup::kWar);
  r.military_strength = level(FeatureGroup::kWar, 20.0);
  r.military_supply = 25.0 * growth * std::exp(0.5 * k * uw);
  r.active_wars = std::max<std::int64_t>(0, std::llround(0.6 + 0.4 * uw + 0.5 * rng.normal()));
  r.truces = std::max<std::int64_t>(0, std::llround(0.3 + 0.5 * rng.normal()));
  const double uh = u(FeatureGroup::kWelfare);
  r.happiness_percentage = std::clamp(50.0 + 12.0 * uh + 4.0 * rng.normal(), 0.0, 100.0);
  r.highest_war_weariness = std::clamp(10.0 - 4.0 * uh + 3.0 * rng.normal(), 0.0, 100.0);
  r.victory_pursuit = kVictoryPaths[static_cast<std::size_t>(s.path)];
  return r;
}

struct GeneratedGame {
  GameRecord record;
  GroundTruthGame truth;
};

GeneratedGame generate_game(const ArenaConfig& c, int g) {
  Rng rng(derive_seed(c.seed, 0xA2E4A, static_cast<std::uint64_t>(g)));
  const int n = c.players;
  const int ntypes = static_cast<int>(c.types.size());

  std::vector<int> type_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) type_of[i] = static_cast<int>((static_cast<long long>(g) * n + i) % ntypes);
  rng.shuffle(std::span<int>(type_of));
  std::vector<int> civ_order(c.civs.size());
  for (std::size_t i = 0; i < civ_order.size(); ++i) civ_order[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(civ_order));

  GeneratedGame out;
  GameRecord& rec = out.record;
  rec.game_id = fmt::format("{}-{:05d}", c.id_prefix, g);
  rec.max_turn = c.max_turn;
  rec.corpus_tag = CorpusTag::kSynthetic;
  std::vector<double> drift(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& type = c.types[type_of[i]];
    const auto& civ = c.civs[civ_order[i]];
    rec.seats.push_back({i, type.name, civ.name});
    drift[i] = c.strength_scale * (type.theta + civ.delta) / c.max_turn;
  }
  const std::size_t vt = rng.categorical(c.victory_weights);
  rec.victory_type = kVictoryTypes[vt];
  const double coupling =
      rec.victory_type == VictoryType::kDomination ? c.score_coupling_domination : c.score_coupling_other;

  std::vector<SeatState> seats(static_cast<std::size_t>(n));
  const double step_sd = 1.0 / std::sqrt(static_cast<double>(c.max_turn));
  const double latent_scale = std::max(1e-9, std::hypot(c.latent_noise, c.strength_scale));
  bool first = true;
  for (int turn = 1; turn <= c.max_turn; ++turn) {
    for (int i = 0; i < n; ++i) {
      auto& s = seats[i];
      s.x += drift[i] + c.latent_noise * step_sd * rng.normal();
      for (auto& w : s.walk) w += step_sd * rng.normal();
      s.score_walk += step_sd * rng.normal();
    }
    if (turn % c.snapshot_every != 0 && turn != c.max_turn) continue;
    for (int i = 0; i < n; ++i) {
      const auto& tmpl = c.types[type_of[i]].pursuit;
      if (first) {
        seats[i].path = static_cast<int>(rng.categorical(tmpl.initial));
      } else {
        seats[i].path = static_cast<int>(rng.categorical(tmpl.transition[seats[i].path]));
      }
    }
    first = false;
    const double growth = 1.0 + 9.0 * turn / static_cast<double>(c.max_turn);
    TurnSnapshot snap;
    snap.turn = turn;
    for (int i = 0; i < n; ++i) snap.signals.push_back(make_signals(seats[i], growth, c, coupling, latent_scale, rng));
    rec.snapshots.push_back(std::move(snap));
  }

  std::vector<double> logits(static_cast<std::size_t>(n));
  double mx = -1e300;
  for (int i = 0; i < n; ++i) {
    logits[i] = c.beta * seats[i].x;
    mx = std::max(mx, logits[i]);
  }
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = std::exp(logits[i] - mx);
  rec.winner_seat = static_cast<int>(rng.categorical(w));
  rec.winner_declared = true;
  validate(rec);

  out.truth.game_id = rec.game_id;
  out.truth.winner_seat = rec.winner_seat;
  for (const auto& s : seats) out.truth.final_latent.push_back(s.x);
  return out;
}

}  // namespace

ArenaOutput generate(const ArenaConfig& c) {
  c.validate();
  std::vector<GeneratedGame> games(static_cast<std::size_t>(c.games));
  parallel_for(games.size(), [&](std::size_t g) { games[g] = generate_game(c, static_cast<int>(g)); });
  ArenaOutput out;
  for (auto& g : games) {
    out.corpus.push_back(std::move(g.record));
    out.truth.games.push_back(std::move(g.truth));
  }
  out.truth.types = c.types;
  out.truth.civs = c.civs;
  out.truth.driver = c.driver;
  return out;
}

GroundTruth planted_effect_report(const ArenaConfig& c, const ArenaOutput& output) {
  GroundTruth t = output.truth;
  t.types = c.types;
  t.civs = c.civs;
  t.driver = c.driver;
  return t;
}

std::string GroundTruth::to_json() const {
  using nlohmann::json;
  json jt = json::array();
  for (const auto& t : types) {
    json trans = json::array();
    for (const auto& row : t.pursuit.transition) trans.push_back(row);
    jt.push_back({{"name", t.name}, {"theta", t.theta}, {"family", t.family},
                  {"pursuit_initial", t.pursuit.initial}, {"pursuit_transition", trans}});
  }
  json jc = json::array();
  for (const auto& c : civs) jc.push_back({{"name", c.name}, {"delta", c.delta}});
  json jg = json::array();
  for (const auto& g : games) {
    jg.push_back({{"game_id", g.game_id}, {"winner_seat", g.winner_seat}, {"final_latent", g.final_latent}});
  }
  std::string planted;
  for (const auto& c : civs) {
    if (c.delta != 0.0) planted = c.name;
  }
  json j = {{"types", jt},
            {"civilizations", jc},
            {"planted_civ", planted},
            {"driver_group", std::string(progeval::to_string(driver))},
            {"games", jg}};
  return j.dump(1);
}

ArenaConfig standard_arena(int games, std::uint64_t seed) {
  ArenaConfig c;
  c.games = games;
  c.seed = seed;
  c.beta = 2.5;
  c.snapshot_every = 4;
  const std::array<std::array<double, 4>, 8> initial = {{{0.7, 0.1, 0.1, 0.1},
                                                         {0.1, 0.7, 0.1, 0.1},
                                                         {0.1, 0.1, 0.7, 0.1},
                                                         {0.1, 0.1, 0.1, 0.7},
                                                         {0.4, 0.4, 0.1, 0.1},
                                                         {0.1, 0.4, 0.4, 0.1},
                                                         {0.25, 0.25, 0.25, 0.25},
                                                         {0.1, 0.1, 0.4, 0.4}}};
  // Each family shares one pivot pattern: from path i it favors favored[f][i].
  const std::array<std::array<int, 4>, 4> favored = {{{1, 2, 3, 0}, {2, 3, 0, 1}, {3, 0, 1, 2}, {1, 3, 1, 1}}};
  for (int i = 0; i < 8; ++i) {
    ArenaPlayerType t;
    t.name = i == 3 ? "VPAI" : fmt::format("T{}", i);
    t.theta = 0.25 * i;
    t.pursuit = PursuitTemplate::directed(initial[i], 0.85, favored[i / 2], 0.8);
    t.family = fmt::format("F{}", i / 2);
    c.types.push_back(t);
  }
  for (int i = 0; i < 12; ++i) c.civs.push_back({fmt::format("Civ{:02d}", i), i == 0 ? 0.5 : 0.0});
  return c;
}

}  // namespace progeval
