#include "progeval/dataset.hpp"

#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "progeval/error.hpp"

namespace progeval {
namespace {

const std::unordered_map<std::string, std::string>& group_by_column() {
  static const std::unordered_map<std::string, std::string> m = [] {
    std::unordered_map<std::string, std::string> out;
    for (int i = 0; i < kNumFeatures; ++i) {
      const auto f = static_cast<Feature>(i);
      for (auto e : {Encoding::kShare, Encoding::kRawShare, Encoding::kAdj, Encoding::kAbsolute}) {
        if (supports(f, e)) out.emplace(column_name(f, e), std::string(to_string(group_of(f))));
      }
    }
    out.emplace("turn_progress", "none");
    return out;
  }();
  return m;
}

}  // namespace

Dataset Dataset::from_features(const std::vector<FeatureRow>& rows, const Corpus& corpus) {
  Dataset d;
  d.columns = feature_columns();
  for (const auto& c : d.columns) d.column_groups.push_back(group_by_column().at(c));
  const int ncol = static_cast<int>(d.columns.size());
  d.x.resize(static_cast<Eigen::Index>(rows.size()), ncol);

  std::unordered_map<std::string, int> game_index;
  for (const auto& g : corpus) {
    if (game_index.emplace(g.game_id, static_cast<int>(d.games.size())).second) {
      d.games.push_back({g.game_id, g.victory_type, g.corpus_tag, g.num_seats()});
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& fr = rows[r];
    if (static_cast<int>(fr.values.size()) != ncol) {
      throw Error(ErrorKind::kShapeMismatch, "feature row width");
    }
    auto it = game_index.find(fr.game_id);
    if (it == game_index.end()) throw Error(ErrorKind::kInvalidGame, "row for unknown game " + fr.game_id);
    for (int c = 0; c < ncol; ++c) d.x(static_cast<Eigen::Index>(r), c) = fr.values[c];
    d.game.push_back(it->second);
    d.turn.push_back(fr.turn);
    d.seat.push_back(fr.seat_id);
    d.won.push_back(fr.won);
    d.turn_progress.push_back(fr.turn_progress);

    const bool new_group = r == 0 || d.game[r - 1] != d.game[r] || d.turn[r - 1] != d.turn[r];
    if (new_group) {
      d.groups.push_back({static_cast<int>(r), 0, -1, it->second, fr.turn, fr.turn_progress});
    }
    auto& grp = d.groups.back();
    if (fr.won != 0) grp.winner = grp.size;
    ++grp.size;
  }
  for (const auto& g : d.groups) {
    if (g.winner < 0) {
      throw Error(ErrorKind::kInvalidGame,
                  fmt::format("{} turn {}: no winning seat", d.games[g.game].game_id, g.turn));
    }
  }
  return d;
}

Dataset Dataset::from_corpus(const Corpus& corpus, const FeatureOptions& options) {
  return from_features(build_features(corpus, options), corpus);
}

int Dataset::column(std::string_view name) const {
  for (int i = 0; i < static_cast<int>(columns.size()); ++i) {
    if (columns[i] == name) return i;
  }
  return -1;
}

std::vector<int> Dataset::column_indices(const std::vector<std::string>& names) const {
  std::vector<int> out;
  for (const auto& n : names) {
    const int c = column(n);
    if (c < 0) throw Error(ErrorKind::kInvalidProfile, "dataset has no column " + n);
    out.push_back(c);
  }
  return out;
}

std::vector<int> Dataset::group_columns(std::string_view group) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(column_groups.size()); ++i) {
    if (column_groups[i] == group) out.push_back(i);
  }
  return out;
}

RowMatrix Dataset::select(const std::vector<int>& cols) const {
  RowMatrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
  return out;
}

void Dataset::append_column(const std::string& name, const std::string& group,
                            const std::vector<double>& values) {
  if (static_cast<Eigen::Index>(values.size()) != x.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "appended column length");
  }
  if (column(name) >= 0) throw Error(ErrorKind::kInvalidProfile, "duplicate column " + name);
  x.conservativeResize(Eigen::NoChange, x.cols() + 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, x.cols() - 1) = values[static_cast<std::size_t>(r)];
  columns.push_back(name);
  column_groups.push_back(group);
}

std::vector<int> Dataset::row_group() const {
  std::vector<int> out(static_cast<std::size_t>(rows()));
  for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
    for (int i = 0; i < groups[g].size; ++i) out[groups[g].begin + i] = g;
  }
  return out;
}

Dataset Dataset::subset_games(const std::vector<int>& game_indices) const {
  std::vector<std::vector<int>> groups_of_game(games.size());
  for (int g = 0; g < static_cast<int>(groups.size()); ++g) groups_of_game[groups[g].game].push_back(g);

  Dataset d;
  d.columns = columns;
  d.column_groups = column_groups;
  int nrows = 0;
  for (int gi : game_indices) {
    for (int g : groups_of_game.at(gi)) nrows += groups[g].size;
  }
  d.x.resize(nrows, x.cols());
  int r = 0;
  for (int gi : game_indices) {
    const int new_game = static_cast<int>(d.games.size());
    d.games.push_back(games[gi]);
    for (int g : groups_of_game[gi]) {
      GroupSpan span = groups[g];
      span.begin = r;
      span.game = new_game;
      d.groups.push_back(span);
      d.x.middleRows(r, span.size) = x.middleRows(groups[g].begin, span.size);
      for (int i = 0; i < span.size; ++i) {
        const int src = groups[g].begin + i;
        d.game.push_back(new_game);
        d.turn.push_back(turn[src]);
        d.seat.push_back(seat[src]);
        d.won.push_back(won[src]);
        d.turn_progress.push_back(turn_progress[src]);
      }
      r += span.size;
    }
  }
  return d;
}

}  // namespace progeval
