#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "progeval/features.hpp"
#include "progeval/game_data.hpp"

namespace progeval {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GameInfo {
  std::string game_id;
  VictoryType victory_type = VictoryType::kTime;
  CorpusTag corpus_tag = CorpusTag::kSynthetic;
  int num_seats = 0;
};

/// Contiguous rows of one (game, turn).
struct GroupSpan {
  int begin = 0;
  int size = 0;
  int winner = 0;  // index within the group
  int game = 0;    // index into Dataset::games
  int turn = 0;
  double turn_progress = 0.0;
};

/// Feature rows as a dense matrix plus the bookkeeping estimators need.
/// Rows are ordered by game, turn, seat; groups are contiguous.
class Dataset {
 public:
  RowMatrix x;
  std::vector<std::string> columns;
  /// Feature-group label per column ("turn_progress" has group "none").
  std::vector<std::string> column_groups;

  std::vector<int> game;  // per row, index into games
  std::vector<int> turn;
  std::vector<int> seat;
  std::vector<int> won;
  std::vector<double> turn_progress;

  std::vector<GroupSpan> groups;
  std::vector<GameInfo> games;

  static Dataset from_features(const std::vector<FeatureRow>& rows, const Corpus& corpus);
  static Dataset from_corpus(const Corpus& corpus, const FeatureOptions& options = {});

  int rows() const { return static_cast<int>(x.rows()); }
  int column(std::string_view name) const;  // -1 when absent
  /// Column indices for names; throws Error(kInvalidProfile) on unknown names.
  std::vector<int> column_indices(const std::vector<std::string>& names) const;
  std::vector<int> group_columns(std::string_view group) const;
  RowMatrix select(const std::vector<int>& cols) const;

  void append_column(const std::string& name, const std::string& group,
                     const std::vector<double>& values);

  /// Rows of the given games (indices into games), in the given order.
  Dataset subset_games(const std::vector<int>& game_indices) const;
  /// Per-row index of the row's group.
  std::vector<int> row_group() const;
};

}  // namespace progeval
