#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "progeval/features.hpp"
#include "progeval/game_data.hpp"

namespace progeval {

/// Markov chain over victory paths, stepped once per snapshot.
struct PursuitTemplate {
  std::array<double, 4> initial{0.25, 0.25, 0.25, 0.25};
  std::array<std::array<double, 4>, 4> transition{};  // rows: from, cols: to

  /// Stays on the current path with probability `stay`, otherwise moves
  /// uniformly to another path.
  static PursuitTemplate sticky(std::array<double, 4> initial, double stay);
  /// Stays with probability `stay`; otherwise moves to `favored[from]` with
  /// probability `bias` and uniformly to the other two paths. A row whose
  /// favored path is itself leaves uniformly.
  static PursuitTemplate directed(std::array<double, 4> initial, double stay, std::array<int, 4> favored,
                                  double bias);
};

struct ArenaPlayerType {
  std::string name;
  double theta = 0.0;  // latent log-worth
  PursuitTemplate pursuit = PursuitTemplate::sticky({0.25, 0.25, 0.25, 0.25}, 0.9);
  std::string family;
};

struct ArenaCiv {
  std::string name;
  double delta = 0.0;
};

struct ArenaConfig {
  std::vector<ArenaPlayerType> types;
  std::vector<ArenaCiv> civs;
  int games = 100;
  int players = 8;
  int max_turn = 100;
  int snapshot_every = 5;
  /// Final latent mean is strength_scale * (theta + delta).
  double strength_scale = 1.0;
  /// Standard deviation of the final latent around its mean.
  double latent_noise = 1.0;
  /// Winner drawn with probability proportional to exp(beta * final latent).
  double beta = 1.0;
  /// Domination, Science, Culture, Diplomatic, Time.
  std::array<double, 5> victory_weights{0.3, 0.25, 0.2, 0.15, 0.1};
  FeatureGroup driver = FeatureGroup::kGrowth;
  double driver_noise = 0.25;
  double group_noise = 1.5;
  /// Weight of the latent in the score signal, by whether the game ends in
  /// a Domination victory.
  double score_coupling_domination = 0.9;
  double score_coupling_other = 0.3;
  std::uint64_t seed = 42;
  std::string id_prefix = "syn";

  /// Throws Error(kInvalidConfig).
  void validate() const;
};

struct GroundTruthGame {
  std::string game_id;
  std::vector<double> final_latent;  // by seat
  int winner_seat = 0;
};

struct GroundTruth {
  std::vector<ArenaPlayerType> types;
  std::vector<ArenaCiv> civs;
  FeatureGroup driver = FeatureGroup::kGrowth;
  std::vector<GroundTruthGame> games;

  std::string to_json() const;
};

struct ArenaOutput {
  Corpus corpus;
  GroundTruth truth;
};

ArenaOutput generate(const ArenaConfig& config);
GroundTruth planted_effect_report(const ArenaConfig& config, const ArenaOutput& output);

/// Eight types with theta spaced `spacing` apart (names T0..T7, "VPAI" at
/// the given index), twelve civilizations with one planted bonus.
ArenaConfig standard_arena(int games, std::uint64_t seed);

}  // namespace progeval
