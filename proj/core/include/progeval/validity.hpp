#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "progeval/dataset.hpp"
#include "progeval/estimators.hpp"
#include "progeval/metrics.hpp"

namespace progeval {

struct Metrics {
  std::optional<double> auc;  // empty when a class is missing
  std::optional<double> log_loss;
  std::optional<double> brier;
  int n_rows = 0;
};

Metrics compute_metrics(std::span<const double> probs, std::span<const int> labels);

struct StratumMetrics {
  std::string estimator;
  std::string stratum_kind;  // overall | decile | victory_type | corpus
  std::string stratum;
  Metrics metrics;
};

struct MetricsReport {
  std::vector<StratumMetrics> rows;

  const StratumMetrics* find(std::string_view estimator, std::string_view kind, std::string_view stratum) const;
};

/// 1..10 with bins [0,0.1), ..., [0.9,1.0]; turn_progress 1 falls in 10.
int progress_decile(double turn_progress);

/// Overall, per decile, per victory type (turn_progress >= late_game only)
/// and per corpus tag. Rows with NaN probability are skipped.
MetricsReport stratified_metrics(const std::string& estimator, const Dataset& d, std::span<const double> probs,
                                 double late_game = 0.8);
void append_report(MetricsReport& into, const MetricsReport& from);
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

struct AgreementBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_rho = 0.0;  // NaN when the bin is empty
  int count = 0;
};

struct RankAgreement {
  std::vector<double> rho;  // per dataset group, NaN when skipped
  std::vector<AgreementBin> bins;
  int skipped = 0;  // groups where either side is constant
  double mean_rho = 0.0;
};

/// Within-(game, turn) Spearman correlation, binned by turn progress.
RankAgreement rank_agreement(const Dataset& d, std::span<const double> a, std::span<const double> b, int bins = 10);
/// Throws Error(kKeyMismatch) unless both tables cover exactly the dataset keys.
RankAgreement rank_agreement(const Dataset& d, const PredictionTable& a, const PredictionTable& b, int bins = 10);

/// Mean pairwise Spearman correlation between per-estimator ELO tables.
/// Throws Error(kMismatchedPlayerTypes).
double bt_ordering_agreement(const std::vector<std::map<std::string, double>>& elo_tables);

struct ImportanceOptions {
  int repeats = 30;
  std::uint64_t seed = 42;
  /// Groups to permute; empty means every labelled group in the dataset.
  std::vector<std::string> groups;
};

struct ImportanceCell {
  double mean = 0.0;
  double std = 0.0;
};

struct ImportanceGrid {
  std::vector<std::string> groups;
  std::vector<std::string> victory_types;  // strata present in the data, plus "all"
  /// cells[group][victory type]
  std::vector<std::vector<ImportanceCell>> cells;
  int repeats = 0;
  /// (game, turn) groups that had no donor of equal size and were left intact.
  int undonored = 0;

  const ImportanceCell& at(std::string_view group, std::string_view victory_type) const;
};

/// Each (game, turn) receives a feature group's block from a uniformly drawn
/// other (game, turn) of the same size, with donor rows shuffled; the
/// increase in row log loss over the unpermuted predictions is averaged by
/// the game's victory type.
ImportanceGrid group_permutation_importance(const TrainedEstimator& model, const Dataset& d,
                                            const ImportanceOptions& options = {});
void write_importance_csv(std::ostream& out, const ImportanceGrid& grid);

}  // namespace progeval
