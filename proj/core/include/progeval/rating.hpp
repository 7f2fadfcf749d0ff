#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "progeval/dataset.hpp"
#include "progeval/game_data.hpp"

namespace progeval {

struct StandingRecord {
  std::string game_id;
  int game_order = 0;  // position of the game in the corpus (ingestion order)
  int seat_id = 0;
  std::string player_type;
  std::string civilization;
  bool is_winner = false;
  double weighted_standing = 0.0;
  double relative_standing = 0.0;
  bool winner_corrected = false;
  double revised_logit = 0.0;
  double revised_standing = 0.0;
};

struct StandingOptions {
  double progress_exponent = 1.0;  // w_t = turn_progress^exponent
  double min_coverage = 0.5;
};

/// Progress-weighted mean probability per seat over the game's predicted
/// turns, and its ratio to the game maximum. Games of the corpus without
/// rows in the dataset are skipped; games whose predicted turns cover less
/// than min_coverage of their snapshots throw Error(kMissingTurns).
/// revised_* start equal to the relative standing.
std::vector<StandingRecord> aggregate_standing(const Corpus& corpus, const Dataset& d, std::span<const double> probs,
                                               const StandingOptions& options = {});

struct CorrectionSummary {
  int games = 0;
  int corrected = 0;
  double rate() const { return games > 0 ? static_cast<double>(corrected) / games : 0.0; }
};

/// Raises a winner that is not the strongest seat to the game maximum
/// (a tie with the maximum counts as strongest) and recomputes relative and
/// revised standings.
CorrectionSummary winner_correction(std::vector<StandingRecord>& records);

struct OlsResult {
  std::vector<double> beta;
  std::vector<double> se;
  double residual_variance = 0.0;
  int n = 0;
};

/// Least squares by normal equations with a ridge term on every coefficient.
OlsResult ols_fit(const RowMatrix& x, std::span<const double> y, double ridge = 1e-8);

struct CivEffect {
  std::string civilization;
  double coef = 0.0;  // 0 for the reference civilization
  double se = 0.0;
  int n = 0;
};

struct CivAdjustResult {
  std::string reference;
  double intercept = 0.0;
  std::vector<CivEffect> effects;  // sorted by civilization name
  bool single_civ = false;

  std::optional<CivEffect> effect(const std::string& civ) const;
};

/// logit(clip(relative)) ~ intercept + civilization one-hot, reference = most
/// frequent civilization (ties by name). Writes revised_logit/standing.
CivAdjustResult civ_adjust(std::vector<StandingRecord>& records, double clip = 1e-3);

struct RatingEntry {
  std::string player_type;
  double worth = 0.0;
  double elo = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_vs_anchor = 1.0;
  int n_games = 0;
};

struct RatingTable {
  std::vector<RatingEntry> entries;  // sorted by player type
  std::string anchor;
  double anchor_elo = 1500.0;
  bool anchor_present = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  /// Log-likelihood never decreased between checks (every 100 iterations
  /// and at convergence).
  bool likelihood_monotone = true;
  int bootstrap_resamples = 0;
  int bootstrap_dropped = 0;

  const RatingEntry* find(const std::string& type) const;
  double elo(const std::string& type) const;  // throws Error(kKeyMismatch)
  std::map<std::string, double> elo_map() const;
};

struct BtOptions {
  std::string anchor = "VPAI";
  double anchor_elo = 1500.0;
  double tol = 1e-10;
  int max_iter = 10000;
  /// When set, receives the log-likelihood after every iteration.
  std::vector<double>* likelihood_trace = nullptr;
};

/// Aggregated fractional-win comparisons between player types.
struct Comparisons {
  std::vector<std::string> types;
  std::vector<std::vector<double>> n;  // symmetric comparison counts
  std::vector<double> wins;            // total fractional wins per type
  std::vector<int> games;              // games per type
};

/// Per game, every pair of seats with different types contributes a
/// fractional win r_i / (r_i + r_j) on revised standings; each type pair
/// carries total weight 1 per game. Games are summed in game_id order.
Comparisons build_comparisons(const std::vector<StandingRecord>& records);

/// Minorization-maximization fit. Throws Error(kDisconnectedGraph) naming the
/// components and Error(kNonConvergence).
RatingTable bt_fit(const std::vector<StandingRecord>& records, const BtOptions& options = {});
RatingTable bt_fit(const Comparisons& comparisons, const BtOptions& options = {});

struct BootstrapOptions {
  int resamples = 1000;
  std::uint64_t seed = 42;
  int max_redraws = 10;
};

/// Game-level resampling; fills ci_low/ci_high (2.5/97.5 percentiles) and
/// p_vs_anchor = 2 min(P(elo* >= anchor), P(elo* <= anchor)) clipped to
/// [2 / resamples, 1].
RatingTable bootstrap_inference(const std::vector<StandingRecord>& records, const BtOptions& bt = {},
                                const BootstrapOptions& options = {});

struct AblationStep {
  int k = 0;
  std::string game_id;
  double elo = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct AblationCurve {
  std::string target;
  std::vector<std::string> base_games;
  std::vector<AblationStep> steps;
};

/// Base set = games without the target; target games are added one at a
/// time in corpus order with a refit and bootstrap at each step.
AblationCurve convergence_ablation(const std::vector<StandingRecord>& records, const std::string& target,
                                   const BtOptions& bt = {}, const BootstrapOptions& boot = {});

struct HeadToHead {
  double probability = 0.0;
  int comparisons = 0;
};

/// P(revised standing of type a > type b | same game), ties one half; pairs
/// that never meet are absent.
std::map<std::pair<std::string, std::string>, HeadToHead> head_to_head(const std::vector<StandingRecord>& records);

/// Relabels every non-anchor seat as "type@label" using label_of(game_id, seat).
std::vector<StandingRecord> relabel_records(
    const std::vector<StandingRecord>& records, const std::string& anchor,
    const std::map<std::pair<std::string, int>, std::string>& label_of);

void write_standings_csv(std::ostream& out, const std::vector<StandingRecord>& records);
void write_ratings_csv(std::ostream& out, const RatingTable& table);
void write_civ_effects_csv(std::ostream& out, const CivAdjustResult& result);
void write_ablation_csv(std::ostream& out, const AblationCurve& curve);
void write_head_to_head_csv(std::ostream& out,
                            const std::map<std::pair<std::string, std::string>, HeadToHead>& h2h);

}  // namespace progeval
