#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "progeval/dataset.hpp"
#include "progeval/diffcore.hpp"
#include "progeval/features.hpp"

namespace progeval {

enum class EstimatorKind {
  kNaive,
  kScore,
  kBaseline,
  kMlp,
  kGroupedMlp,
  kInteractionMlp,
  kAttentionMlp,
};
inline constexpr std::array<EstimatorKind, 7> kEstimatorKinds = {
    EstimatorKind::kNaive,      EstimatorKind::kScore,          EstimatorKind::kBaseline,
    EstimatorKind::kMlp,        EstimatorKind::kGroupedMlp,     EstimatorKind::kInteractionMlp,
    EstimatorKind::kAttentionMlp};

std::string_view to_string(EstimatorKind k);
/// Throws Error(kUnknownEstimator).
EstimatorKind parse_estimator_kind(std::string_view name);
bool is_neural(EstimatorKind k);
/// Probabilities sum to one within every (game, turn).
bool is_group_normalized(EstimatorKind k);

struct Hyperparams {
  int hidden = 0;   // MLP width or set-model encoder width
  int decoder = 0;  // set-model decoder width
  int heads = 0;
  double dropout = 0.0;
  double attn_dropout = 0.0;
  double loss_tp_alpha = 0.0;
  int epochs = 0;
  int batch_size = 0;  // rows for the per-row MLP, groups otherwise
  double lr = 0.0;
  double weight_decay = 0.0;
  double score_exponent = 0.0;  // score model: 0 fits k, > 0 fixes it

  bool operator==(const Hyperparams&) const = default;
};

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kNaive;
  EncodingProfile profile;
  Hyperparams hp;
  std::uint64_t seed = 42;
  /// Extra dataset columns fed to the model after the profile columns.
  std::vector<std::string> extra_columns;

  /// Appendix defaults for the kind.
  static EstimatorSpec defaults(EstimatorKind kind);
  std::vector<std::string> input_columns() const;
  diffcore::ArchSpec arch() const;
  /// Throws Error(kInvalidConfig) on out-of-range hyperparameters.
  void validate() const;
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for constant columns

  static Standardizer fit(const RowMatrix& x);
  RowMatrix apply(const RowMatrix& x) const;
};

/// Weighted pool-adjacent-violators on values in the given order; returns
/// the non-decreasing fitted sequence (pooled block means).
std::vector<double> pav(std::span<const double> y, std::span<const double> w = {});

/// Monotone map from scores to probabilities, piecewise linear between the
/// extreme scores of adjacent PAV blocks and flat outside them.
struct IsotonicMap {
  std::vector<double> knot_x;
  std::vector<double> knot_y;

  static IsotonicMap fit(std::span<const double> scores, std::span<const int> labels,
                         std::span<const double> weights = {});
  double operator()(double score) const;
};

struct LogisticOptions {
  double l2 = 1e-6;
  double tol = 1e-8;  // infinity norm of the gradient
  int max_iter = 200;
};

struct LogisticFit {
  std::vector<double> coef;
  double intercept = 0.0;
  int iterations = 0;
  /// The fitted linear predictor separates the classes perfectly.
  bool separable = false;

  double linear(const double* row) const;
};

/// Newton iterations on mean log loss + (l2 / 2) |coef|^2 (intercept not
/// penalized). Throws Error(kNonConvergence).
LogisticFit fit_logistic(const RowMatrix& x, std::span<const int> y, const LogisticOptions& options = {});

std::vector<double> predict_naive(const Dataset& d);
/// p_i = s_i^k / sum_j s_j^k within each group; uniform for all-zero groups.
std::vector<double> score_probabilities(const Dataset& d, std::span<const double> scores, double k);
/// Golden-section search on log k over [0.5, 12] minimizing row log loss.
double fit_score_exponent(const Dataset& d, std::span<const double> scores);

struct TrainingMetrics {
  std::vector<double> epoch_loss;
  bool aborted = false;
  std::string abort_reason;
};

/// One fitted model (a single fold, or a model trained on all data).
struct FittedModel {
  EstimatorKind kind = EstimatorKind::kNaive;
  double score_exponent = 1.0;
  Standardizer standardizer;
  LogisticFit logistic;
  IsotonicMap calibration;
  diffcore::Checkpoint network;
  TrainingMetrics metrics;

  std::vector<double> predict(const Dataset& d, const EstimatorSpec& spec) const;
};

/// Neural training; a non-finite loss stops training early and keeps the
/// last finite parameters with metrics.aborted set.
FittedModel fit_neural(const EstimatorSpec& spec, const Dataset& train);
FittedModel fit_baseline(const EstimatorSpec& spec, const Dataset& train);
/// Any kind. Throws Error(kNonFiniteLoss) if neural training aborted.
FittedModel fit_model(const EstimatorSpec& spec, const Dataset& train);

std::string fitted_model_to_json(const FittedModel& model, const EstimatorSpec& spec);
FittedModel fitted_model_from_json(const std::string& text, EstimatorSpec* spec = nullptr);

struct PredictionRow {
  std::string game_id;
  int turn = 0;
  int seat_id = 0;
  double probability = 0.0;
  bool out_of_fold = true;
};

struct PredictionTable {
  EstimatorKind kind = EstimatorKind::kNaive;
  std::vector<PredictionRow> rows;
};

PredictionTable make_prediction_table(EstimatorKind kind, const Dataset& d,
                                      std::span<const double> probs, bool out_of_fold);
/// Probabilities aligned with the dataset's rows; throws Error(kKeyMismatch)
/// when a dataset row has no prediction.
std::vector<double> align_predictions(const PredictionTable& table, const Dataset& d);
void write_predictions_csv(std::ostream& out, const PredictionTable& table);
PredictionTable read_predictions_csv(std::istream& in);

/// Fold models plus the fold of every training game.
struct TrainedEstimator {
  EstimatorSpec spec;
  std::vector<FittedModel> folds;
  std::map<std::string, int> fold_of_game;

  /// Each known game is predicted by the model of its own fold; other games
  /// by the average of all fold models.
  std::vector<double> predict(const Dataset& d) const;
};

enum class SplitMode { kGroupedKFold, kTrainNonLlm, kTrainLlm };
std::string_view to_string(SplitMode m);
SplitMode parse_split_mode(std::string_view s);

struct CvOptions {
  int folds = 5;
  std::uint64_t seed = 42;
  SplitMode mode = SplitMode::kGroupedKFold;
};

/// Games ranked by a seeded hash of game_id, then dealt round-robin.
std::vector<int> fold_assignment(const Dataset& d, int folds, std::uint64_t seed);

struct CvResult {
  PredictionTable predictions;
  /// Aligned with the evaluated dataset rows (NaN for training-only rows in
  /// the corpus split modes).
  std::vector<double> probs;
  TrainedEstimator model;
};

/// Throws Error(kTooFewGames) when there are fewer games than folds.
CvResult cross_validate(const EstimatorSpec& spec, const Dataset& d, const CvOptions& options = {});

struct SearchOptions {
  int trials = 20;
  std::uint64_t seed = 42;
  double lambda_gap = 1.0;
  double validation_fraction = 0.2;
};

struct Trial {
  int index = 0;
  Hyperparams hp;
  double train_log_loss = 0.0;
  double val_log_loss = 0.0;
  double objective = 0.0;
  bool failed = false;
  std::string failure;
};

struct SearchResult {
  EstimatorSpec best;
  int best_trial = -1;
  std::vector<Trial> trials;
};

/// val + lambda * max(0, val - train).
double search_objective(double train_log_loss, double val_log_loss, double lambda_gap);
/// Uniform draw from the search space of a kind.
Hyperparams sample_hyperparams(EstimatorKind kind, std::uint64_t seed);
/// Random search on one grouped train/validation split.
SearchResult hyper_search(const EstimatorSpec& base, const Dataset& d, const SearchOptions& options = {});
void write_trial_log(std::ostream& out, const SearchResult& result);

}  // namespace progeval
