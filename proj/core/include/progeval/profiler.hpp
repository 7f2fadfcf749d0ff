#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "progeval/estimators.hpp"
#include "progeval/game_data.hpp"
#include "progeval/rating.hpp"
#include "progeval/stats.hpp"

namespace progeval {

using PathArray = std::array<double, 4>;  // indexed by VictoryPath order
using PathMatrix = std::array<PathArray, 4>;

/// Share of game time one seat spent on each path. Pursuit is held from
/// each snapshot to the next; the last snapshot counts for one turn.
PathArray seat_time_shares(const GameRecord& game, int seat);

/// Argmax of shares; ties go to the earlier path.
VictoryPath dominant_path(const PathArray& shares);

struct PathShare {
  double mean = 0.0;
  double sd = 0.0;
  stats::TTestResult test;  // one-sample against 0.25
};

struct TypeAllocation {
  std::string player_type;
  int n_games = 0;  // seat-games
  std::array<PathShare, 4> paths;
  VictoryPath dominant = VictoryPath::kDomination;
  std::vector<PathArray> per_game;  // one entry per seat-game, corpus order
};

struct AllocationProfile {
  std::vector<TypeAllocation> types;  // sorted by name
  const TypeAllocation* find(const std::string& type) const;
};

/// Throws Error(kNoPursuitData) when no game has snapshots.
AllocationProfile time_allocation(const Corpus& corpus);

struct CommitmentRow {
  std::string player_type;
  VictoryPath dominant = VictoryPath::kDomination;
  double share = 0.0;           // mean share on the type's dominant path
  double baseline_share = 0.0;  // baseline's mean share on its own dominant path
  double delta = 0.0;
  stats::TTestResult test;  // Welch, type minus baseline
};

/// Throws Error(kMissingBaseline).
std::vector<CommitmentRow> commitment(const AllocationProfile& profile, const std::string& baseline = "VPAI");

struct PivotEvent {
  std::string game_id;
  int seat_id = 0;
  std::string player_type;
  int turn = 0;
  VictoryPath from = VictoryPath::kDomination;
  VictoryPath to = VictoryPath::kDomination;
  double win_prob = std::numeric_limits<double>::quiet_NaN();
};

struct PivotFrequency {
  int games = 0;  // seat-games
  int events = 0;
  double per_game() const { return games > 0 ? static_cast<double>(events) / games : 0.0; }
};

struct PivotReport {
  std::vector<PivotEvent> events;
  std::map<std::string, PivotFrequency> frequency;
};

struct PivotOptions {
  int min_turn = 25;  // pivots must happen strictly after this turn
};

/// Win probability at a pivot comes from `predictions` at the same turn, or
/// the latest earlier turn of that seat when the exact one is missing.
PivotReport detect_pivots(const Corpus& corpus, const PredictionTable* predictions = nullptr,
                          const PivotOptions& options = {});

struct FlowMatrix {
  std::string player_type;
  int games = 0;
  PathMatrix counts{};
  PathMatrix rate{};      // counts / games, zero diagonal
  PathMatrix win_prob{};  // mean pivot win probability per cell, NaN when empty

  /// The 12 off-diagonal rates, row-major.
  std::array<double, 12> off_diagonal() const;
};

std::map<std::string, FlowMatrix> pivot_flows(const PivotReport& report);

struct FlowPair {
  std::string a;
  std::string b;
  double r = 0.0;
  bool within = false;
};

struct FlowSimilarity {
  std::vector<FlowPair> pairs;
  double within_mean = std::numeric_limits<double>::quiet_NaN();
  double cross_mean = std::numeric_limits<double>::quiet_NaN();
  int skipped = 0;  // pairs with a constant vector
};

/// Pearson r over off-diagonal rates for every pair of types present in
/// `family`; pairs sharing a family are "within".
FlowSimilarity flow_similarity(const std::map<std::string, FlowMatrix>& flows,
                               const std::map<std::string, std::string>& family);

/// Ratings fitted on records whose seat's per-game dominant path matches.
/// Paths whose comparison graph is disconnected are left out.
std::map<VictoryPath, RatingTable> rate_by_dominant_path(const Corpus& corpus,
                                                         const std::vector<StandingRecord>& records,
                                                         const BtOptions& options = {});

struct StrategyLabel {
  VictoryPath path = VictoryPath::kDomination;
  double value = 0.0;
};

struct BestStrategy {
  std::string player_type;
  StrategyLabel most_chosen;              // mean time share
  StrategyLabel most_pivoted_to;          // incoming pivots per game; most chosen when none
  std::optional<StrategyLabel> best_elo;  // among paths with enough games
};

std::vector<BestStrategy> best_strategy_summary(const std::map<VictoryPath, RatingTable>& by_path,
                                                const AllocationProfile& profile,
                                                const std::map<std::string, FlowMatrix>& flows,
                                                int min_games = 5);

inline constexpr double kEightPlayerBaseRate = 0.125;

void write_allocation_csv(std::ostream& out, const AllocationProfile& profile);
void write_commitment_csv(std::ostream& out, const std::vector<CommitmentRow>& rows);
void write_pivots_csv(std::ostream& out, const PivotReport& report);
void write_flows_csv(std::ostream& out, const std::map<std::string, FlowMatrix>& flows);
std::string profile_summary_json(const AllocationProfile& profile, const std::vector<CommitmentRow>& commitment,
                                 const PivotReport& pivots, const FlowSimilarity* similarity,
                                 const std::vector<BestStrategy>& best);

}  // namespace progeval
