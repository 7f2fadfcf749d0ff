#include "progeval/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

namespace progeval {
namespace {

enum class Kind { kYield, kCount, kScalar };

struct FeatureInfo {
  Feature feature;
  const char* base;
  FeatureGroup group;
  Kind kind;
};

constexpr std::array<FeatureInfo, kNumFeatures> kInfo = {{
    {Feature::kTechnologiesGap, "technologies_gap", FeatureGroup::kScience, Kind::kScalar},
    {Feature::kScience, "science", FeatureGroup::kScience, Kind::kYield},
    {Feature::kPoliciesGap, "policies_gap", FeatureGroup::kCulture, Kind::kScalar},
    {Feature::kCulture, "culture", FeatureGroup::kCulture, Kind::kYield},
    {Feature::kTourism, "tourism", FeatureGroup::kCulture, Kind::kYield},
    {Feature::kGold, "gold", FeatureGroup::kEconomy, Kind::kYield},
    {Feature::kProduction, "production", FeatureGroup::kEconomy, Kind::kYield},
    {Feature::kCities, "cities", FeatureGroup::kGrowth, Kind::kCount},
    {Feature::kFood, "food", FeatureGroup::kGrowth, Kind::kYield},
    {Feature::kPopulation, "population", FeatureGroup::kGrowth, Kind::kCount},
    {Feature::kFaith, "faith", FeatureGroup::kReligion, Kind::kYield},
    {Feature::kReligionPercentage, "religion_percentage", FeatureGroup::kReligion, Kind::kScalar},
    {Feature::kVotes, "votes", FeatureGroup::kInfluence, Kind::kCount},
    {Feature::kMinorAllies, "minor_allies", FeatureGroup::kInfluence, Kind::kCount},
    {Feature::kDefensivePacts, "defensive_pacts", FeatureGroup::kInfluence, Kind::kScalar},
    {Feature::kFriendships, "friendships", FeatureGroup::kInfluence, Kind::kScalar},
    {Feature::kMilitary, "military", FeatureGroup::kWar, Kind::kYield},
    {Feature::kMilitaryUtilization, "military_utilization", FeatureGroup::kWar, Kind::kScalar},
    {Feature::kActiveWars, "active_wars", FeatureGroup::kWar, Kind::kScalar},
    {Feature::kTruces, "truces", FeatureGroup::kWar, Kind::kScalar},
    {Feature::kHappinessPercentage, "happiness_percentage", FeatureGroup::kWelfare, Kind::kScalar},
    {Feature::kHighestWarWeariness, "highest_war_weariness", FeatureGroup::kWelfare, Kind::kScalar},
    {Feature::kScoreRatio, "score_ratio", FeatureGroup::kScore, Kind::kScalar},
}};

const FeatureInfo& info(Feature f) { return kInfo[static_cast<int>(f)]; }

std::vector<Encoding> encodings_of(Feature f) {
  switch (info(f).kind) {
    case Kind::kYield: return {Encoding::kShare, Encoding::kRawShare, Encoding::kAdj};
    case Kind::kCount: return {Encoding::kShare, Encoding::kAbsolute};
    case Kind::kScalar: return {Encoding::kAbsolute};
  }
  return {};
}

// Raw per-seat quantity behind each yield/count feature.
double raw_quantity(Feature f, const RawSignals& s) {
  switch (f) {
    case Feature::kScience: return s.science;
    case Feature::kCulture: return s.culture;
    case Feature::kTourism: return s.tourism;
    case Feature::kGold: return s.gold;
    case Feature::kProduction: return s.production;
    case Feature::kFood: return s.food;
    case Feature::kFaith: return s.faith;
    case Feature::kMilitary: return s.military_strength;
    case Feature::kCities: return static_cast<double>(s.cities);
    case Feature::kPopulation: return static_cast<double>(s.population);
    case Feature::kVotes: return static_cast<double>(s.votes);
    case Feature::kMinorAllies: return static_cast<double>(s.minor_allies);
    default: return 0.0;
  }
}

}  // namespace

std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kScience: return "science";
    case FeatureGroup::kCulture: return "culture";
    case FeatureGroup::kEconomy: return "economy";
    case FeatureGroup::kGrowth: return "growth";
    case FeatureGroup::kReligion: return "religion";
    case FeatureGroup::kInfluence: return "influence";
    case FeatureGroup::kWar: return "war";
    case FeatureGroup::kWelfare: return "welfare";
    case FeatureGroup::kScore: return "score";
  }
  return "?";
}

std::string_view to_string(Encoding e) {
  switch (e) {
    case Encoding::kShare: return "share";
    case Encoding::kRawShare: return "raw_share";
    case Encoding::kAdj: return "adj";
    case Encoding::kAbsolute: return "absolute";
  }
  return "?";
}

std::string_view feature_base_name(Feature f) { return info(f).base; }
FeatureGroup group_of(Feature f) { return info(f).group; }

bool supports(Feature f, Encoding e) {
  const auto encs = encodings_of(f);
  return std::find(encs.begin(), encs.end(), e) != encs.end();
}

std::string column_name(Feature f, Encoding e) {
  const std::string base = info(f).base;
  switch (e) {
    case Encoding::kShare: return base + "_share";
    case Encoding::kRawShare: return base + "_raw_share";
    case Encoding::kAdj: return base + "_adj";
    case Encoding::kAbsolute: return base;
  }
  return base;
}

const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> out;
    for (const auto& fi : kInfo) {
      for (auto e : encodings_of(fi.feature)) out.push_back(column_name(fi.feature, e));
    }
    out.emplace_back("turn_progress");
    return out;
  }();
  return columns;
}

int column_index(std::string_view name) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& cols = feature_columns();
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) m.emplace(cols[i], i);
    return m;
  }();
  auto it = index.find(std::string(name));
  return it == index.end() ? -1 : it->second;
}

double FeatureRow::at(std::string_view column) const {
  const int i = column_index(column);
  if (i < 0) throw Error(ErrorKind::kInvalidProfile, "unknown column " + std::string(column));
  return values[i];
}

void EncodingProfile::validate() const {
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    if (!supports(f, encodings[i])) {
      throw Error(ErrorKind::kInvalidProfile,
                  fmt::format("{} has no {} encoding", feature_base_name(f), to_string(encodings[i])));
    }
  }
}

std::vector<std::string> EncodingProfile::columns() const {
  validate();
  std::vector<std::string> out;
  for (int i = 0; i < kNumFeatures; ++i) out.push_back(column_name(static_cast<Feature>(i), encodings[i]));
  if (include_turn_progress) out.emplace_back("turn_progress");
  return out;
}

std::vector<FeatureGroup> EncodingProfile::column_groups() const {
  std::vector<FeatureGroup> out;
  for (int i = 0; i < kNumFeatures; ++i) out.push_back(group_of(static_cast<Feature>(i)));
  return out;
}

EncodingProfile EncodingProfile::share() {
  EncodingProfile p;
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    p.encodings[i] = supports(f, Encoding::kShare) ? Encoding::kShare : Encoding::kAbsolute;
  }
  p.include_turn_progress = false;
  return p;
}

EncodingProfile EncodingProfile::mixed_share() {
  EncodingProfile p = share();
  p.encodings[static_cast<int>(Feature::kProduction)] = Encoding::kRawShare;
  p.encodings[static_cast<int>(Feature::kFaith)] = Encoding::kRawShare;
  p.include_turn_progress = true;
  return p;
}

EncodingProfile EncodingProfile::adjusted() {
  EncodingProfile p;
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    p.encodings[i] = supports(f, Encoding::kAdj) ? Encoding::kAdj : Encoding::kAbsolute;
  }
  p.include_turn_progress = true;
  return p;
}

std::vector<double> shares(std::span<const double> values) {
  double total = 0.0;
  for (double v : values) {
    if (v < 0 || std::isnan(v)) throw Error(ErrorKind::kNegativeInput, "shares: negative value");
    total += v;
  }
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  if (total == 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(values.size()));
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / total;
  return out;
}

std::vector<double> gap(std::span<const double> counts) {
  std::vector<double> out(counts.size());
  if (counts.empty()) return out;
  for (double v : counts) {
    if (v < 0) throw Error(ErrorKind::kNegativeInput, "gap: negative count");
  }
  const double leader = *std::max_element(counts.begin(), counts.end());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = leader - counts[i];
  return out;
}

double adjusted_yield(double raw, double cities, double gamma) {
  if (gamma < 0) throw Error(ErrorKind::kNegativeGamma, fmt::format("gamma = {}", gamma));
  if (raw < 0 || cities < 0) throw Error(ErrorKind::kNegativeInput, "adjusted_yield");
  return raw / std::pow(std::max(1.0, cities), gamma);
}

double military_utilization(double strength, double supply, double cap) {
  if (supply <= 0.0) return strength > 0.0 ? cap : 0.0;
  return std::clamp(strength / supply, 0.0, cap);
}

std::vector<FeatureRow> build_features(const Corpus& corpus, const FeatureOptions& options) {
  if (options.gamma < 0) throw Error(ErrorKind::kNegativeGamma, fmt::format("gamma = {}", options.gamma));
  const auto& cols = feature_columns();
  const int n_cols = static_cast<int>(cols.size());
  std::vector<int> share_col(kNumFeatures, -1), raw_share_col(kNumFeatures, -1),
      adj_col(kNumFeatures, -1), abs_col(kNumFeatures, -1);
  for (int i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    if (supports(f, Encoding::kShare)) share_col[i] = column_index(column_name(f, Encoding::kShare));
    if (supports(f, Encoding::kRawShare)) raw_share_col[i] = column_index(column_name(f, Encoding::kRawShare));
    if (supports(f, Encoding::kAdj)) adj_col[i] = column_index(column_name(f, Encoding::kAdj));
    if (supports(f, Encoding::kAbsolute)) abs_col[i] = column_index(column_name(f, Encoding::kAbsolute));
  }
  const int tp_col = column_index("turn_progress");

  std::vector<FeatureRow> rows;
  std::size_t total = 0;
  for (const auto& g : corpus) total += g.snapshots.size() * g.seats.size();
  rows.reserve(total);

  for (int gi = 0; gi < static_cast<int>(corpus.size()); ++gi) {
    const auto& game = corpus[gi];
    const std::size_t n = game.seats.size();
    for (const auto& snap : game.snapshots) {
      try {
        std::vector<std::vector<double>> v(n, std::vector<double>(n_cols, 0.0));
        std::vector<double> tmp(n), tmp2(n);
        auto fill = [&](int col, const std::vector<double>& xs) {
          if (col < 0) return;
          for (std::size_t s = 0; s < n; ++s) v[s][col] = xs[s];
        };
        auto seat_values = [&](auto fn) {
          for (std::size_t s = 0; s < n; ++s) tmp[s] = fn(snap.signals[s]);
          return tmp;
        };

        for (int i = 0; i < kNumFeatures; ++i) {
          const auto f = static_cast<Feature>(i);
          switch (info(f).kind) {
            case Kind::kYield: {
              std::vector<double> raw(n), adj(n);
              for (std::size_t s = 0; s < n; ++s) {
                raw[s] = raw_quantity(f, snap.signals[s]);
                adj[s] = adjusted_yield(raw[s], static_cast<double>(snap.signals[s].cities),
                                        options.gamma);
              }
              fill(adj_col[i], adj);
              fill(share_col[i], shares(adj));
              fill(raw_share_col[i], shares(raw));
              break;
            }
            case Kind::kCount: {
              std::vector<double> raw(n);
              for (std::size_t s = 0; s < n; ++s) raw[s] = raw_quantity(f, snap.signals[s]);
              fill(abs_col[i], raw);
              fill(share_col[i], shares(raw));
              break;
            }
            case Kind::kScalar: break;
          }
        }
        fill(abs_col[static_cast<int>(Feature::kTechnologiesGap)],
             gap(seat_values([](const RawSignals& s) { return static_cast<double>(s.technologies); })));
        fill(abs_col[static_cast<int>(Feature::kPoliciesGap)],
             gap(seat_values([](const RawSignals& s) { return static_cast<double>(s.policies); })));
        fill(abs_col[static_cast<int>(Feature::kReligionPercentage)],
             seat_values([](const RawSignals& s) { return s.religion_percentage; }));
        fill(abs_col[static_cast<int>(Feature::kDefensivePacts)],
             seat_values([](const RawSignals& s) { return static_cast<double>(s.defensive_pacts); }));
        fill(abs_col[static_cast<int>(Feature::kFriendships)],
             seat_values([](const RawSignals& s) { return static_cast<double>(s.friendships); }));
        fill(abs_col[static_cast<int>(Feature::kMilitaryUtilization)],
             seat_values([&](const RawSignals& s) {
               return military_utilization(s.military_strength, s.military_supply,
                                           options.utilization_cap);
             }));
        fill(abs_col[static_cast<int>(Feature::kActiveWars)],
             seat_values([](const RawSignals& s) { return static_cast<double>(s.active_wars); }));
        fill(abs_col[static_cast<int>(Feature::kTruces)],
             seat_values([](const RawSignals& s) { return static_cast<double>(s.truces); }));
        fill(abs_col[static_cast<int>(Feature::kHappinessPercentage)],
             seat_values([](const RawSignals& s) { return s.happiness_percentage; }));
        fill(abs_col[static_cast<int>(Feature::kHighestWarWeariness)],
             seat_values([](const RawSignals& s) { return s.highest_war_weariness; }));
        for (std::size_t s = 0; s < n; ++s) tmp2[s] = snap.signals[s].score;
        fill(abs_col[static_cast<int>(Feature::kScoreRatio)], shares(tmp2));

        const double tp = static_cast<double>(snap.turn) / static_cast<double>(game.max_turn);
        for (std::size_t s = 0; s < n; ++s) {
          v[s][tp_col] = tp;
          FeatureRow row;
          row.game_id = game.game_id;
          row.game_index = gi;
          row.turn = snap.turn;
          row.seat_id = static_cast<int>(s);
          row.values = std::move(v[s]);
          row.turn_progress = tp;
          row.won = static_cast<int>(s) == game.winner_seat ? 1 : 0;
          row.victory_type = game.victory_type;
          rows.push_back(std::move(row));
        }
      } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("game {} turn {}: {}", game.game_id, snap.turn, e.context()));
      }
    }
  }
  return rows;
}

void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows) {
  out << "game_id,turn,seat";
  for (const auto& c : feature_columns()) out << ',' << c;
  out << ",won,victory_type\n";
  for (const auto& r : rows) {
    out << r.game_id << ',' << r.turn << ',' << r.seat_id;
    for (double v : r.values) out << ',' << fmt::format("{:.10g}", v);
    out << ',' << r.won << ',' << to_string(r.victory_type) << '\n';
  }
}

}  // namespace progeval
