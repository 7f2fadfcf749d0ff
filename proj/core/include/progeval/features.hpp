#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "progeval/game_data.hpp"

namespace progeval {

/// The 23 game-state features, in canonical table order.
enum class Feature {
  kTechnologiesGap,
  kScience,
  kPoliciesGap,
  kCulture,
  kTourism,
  kGold,
  kProduction,
  kCities,
  kFood,
  kPopulation,
  kFaith,
  kReligionPercentage,
  kVotes,
  kMinorAllies,
  kDefensivePacts,
  kFriendships,
  kMilitary,
  kMilitaryUtilization,
  kActiveWars,
  kTruces,
  kHappinessPercentage,
  kHighestWarWeariness,
  kScoreRatio,
};
inline constexpr int kNumFeatures = 23;

enum class FeatureGroup {
  kScience,
  kCulture,
  kEconomy,
  kGrowth,
  kReligion,
  kInfluence,
  kWar,
  kWelfare,
  kScore,
};
inline constexpr int kNumFeatureGroups = 9;

/// kShare: fraction of the cross-player total of the adjusted value (or of
/// the count, for count features). kRawShare: fraction of the raw yield
/// total. kAdj: city-penalized yield. kAbsolute: the value itself.
enum class Encoding { kShare, kRawShare, kAdj, kAbsolute };

std::string_view to_string(FeatureGroup g);
std::string_view to_string(Encoding e);
std::string_view feature_base_name(Feature f);
FeatureGroup group_of(Feature f);
bool supports(Feature f, Encoding e);
/// Column name of a feature under an encoding, e.g. "production_raw_share".
std::string column_name(Feature f, Encoding e);

/// Every column emitted by build_features, in dump order (turn_progress last).
const std::vector<std::string>& feature_columns();
int column_index(std::string_view name);  // -1 if unknown

struct EncodingProfile {
  std::array<Encoding, kNumFeatures> encodings{};
  bool include_turn_progress = true;

  /// Throws Error(kInvalidProfile) for encodings a feature does not have.
  void validate() const;
  /// Selected model-input columns (23 or 24 names).
  std::vector<std::string> columns() const;
  std::vector<FeatureGroup> column_groups() const;

  /// Share encodings everywhere; no turn_progress (logistic Baseline).
  static EncodingProfile share();
  /// Shares, with raw-total shares for production and faith (MLP, GroupedMLP).
  static EncodingProfile mixed_share();
  /// Adjusted/absolute values for the set-based estimators.
  static EncodingProfile adjusted();

  bool operator==(const EncodingProfile&) const = default;
};

struct FeatureRow {
  std::string game_id;
  int game_index = 0;
  int turn = 0;
  int seat_id = 0;
  std::vector<double> values;  // aligned with feature_columns()
  double turn_progress = 0.0;
  int won = 0;
  VictoryType victory_type = VictoryType::kTime;

  double at(std::string_view column) const;
};

struct FeatureOptions {
  double gamma = 0.25;
  double utilization_cap = 2.0;
};

/// Fractions of the total; uniform 1/N when the total is zero.
std::vector<double> shares(std::span<const double> values);
/// Leader's count minus each count.
std::vector<double> gap(std::span<const double> counts);
/// raw / max(1, cities)^gamma.
double adjusted_yield(double raw, double cities, double gamma);
/// strength / supply clipped to [0, cap]; zero supply maps to 0 with no
/// strength and to cap otherwise.
double military_utilization(double strength, double supply, double cap = 2.0);

/// One row per (game, turn, seat), ordered by game, turn, then seat.
std::vector<FeatureRow> build_features(const Corpus& corpus, const FeatureOptions& options = {});

/// CSV with a header of canonical column names.
void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows);

}  // namespace progeval
