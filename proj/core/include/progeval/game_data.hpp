#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "progeval/error.hpp"

namespace progeval {

enum class VictoryPath { kDomination, kScience, kCulture, kDiplomatic };
inline constexpr std::array<VictoryPath, 4> kVictoryPaths = {
    VictoryPath::kDomination, VictoryPath::kScience, VictoryPath::kCulture,
    VictoryPath::kDiplomatic};

enum class VictoryType { kDomination, kScience, kCulture, kDiplomatic, kTime };
inline constexpr std::array<VictoryType, 5> kVictoryTypes = {
    VictoryType::kDomination, VictoryType::kScience, VictoryType::kCulture,
    VictoryType::kDiplomatic, VictoryType::kTime};

enum class CorpusTag { kLlm, kVpaiSelfplay, kSynthetic };

std::string_view to_string(VictoryPath p);
std::string_view to_string(VictoryType v);
std::string_view to_string(CorpusTag t);
std::optional<VictoryPath> parse_victory_path(std::string_view s);
std::optional<VictoryType> parse_victory_type(std::string_view s);
std::optional<CorpusTag> parse_corpus_tag(std::string_view s);

struct PlayerSeat {
  int seat_id = 0;
  std::string player_type;
  std::string civilization;
  bool operator==(const PlayerSeat&) const = default;
};

/// One seat's observable state at one turn. Counts are integral.
struct RawSignals {
  double score = 0;
  std::int64_t technologies = 0;
  std::int64_t policies = 0;
  double science = 0;
  double culture = 0;
  double tourism = 0;
  double gold = 0;
  double production = 0;
  double food = 0;
  double faith = 0;
  std::int64_t cities = 0;
  std::int64_t population = 0;
  std::int64_t votes = 0;
  std::int64_t minor_allies = 0;
  std::int64_t defensive_pacts = 0;
  std::int64_t friendships = 0;
  double military_strength = 0;
  double military_supply = 0;
  std::int64_t active_wars = 0;
  std::int64_t truces = 0;
  double happiness_percentage = 0;
  double highest_war_weariness = 0;
  double religion_percentage = 0;
  VictoryPath victory_pursuit = VictoryPath::kDomination;

  bool operator==(const RawSignals&) const = default;
};

/// Names of the numeric RawSignals fields, in declaration order.
const std::vector<std::string>& raw_signal_field_names();

struct TurnSnapshot {
  int turn = 0;
  /// Indexed by seat_id; every seat present.
  std::vector<RawSignals> signals;
  bool operator==(const TurnSnapshot&) const = default;
};

struct GameRecord {
  std::string game_id;
  int max_turn = 1;
  std::vector<PlayerSeat> seats;
  int winner_seat = 0;
  VictoryType victory_type = VictoryType::kTime;
  /// False when the winner was resolved by the final-score rule.
  bool winner_declared = true;
  std::vector<TurnSnapshot> snapshots;
  CorpusTag corpus_tag = CorpusTag::kSynthetic;

  int num_seats() const { return static_cast<int>(seats.size()); }
  bool operator==(const GameRecord&) const = default;
};

using Corpus = std::vector<GameRecord>;

/// Throws Error(kInvalidGame / kNonMonotoneTurns / kMissingSeatInSnapshot)
/// when a record breaks a structural invariant.
void validate(const GameRecord& game);

struct WinnerResolution {
  int seat = 0;
  VictoryType victory_type = VictoryType::kTime;
};

/// Declared winners pass through; otherwise the final-snapshot score leader
/// wins a Time victory (ties to the lowest seat).
WinnerResolution winner_of(const GameRecord& game);
WinnerResolution winner_of(const GameRecord& game, std::optional<int> declared_seat,
                           std::optional<VictoryType> declared_type);

struct IngestIssue {
  std::string game_id;
  ErrorKind kind;
  int line_no = 0;
  std::string message;
};

struct IngestReport {
  Corpus games;
  std::vector<IngestIssue> rejected;
  /// field name -> number of seat-snapshots where it defaulted to 0
  std::map<std::string, std::int64_t> defaulted_fields;
  std::map<std::string, std::int64_t> unknown_fields;
};

struct IngestOptions {
  /// Games with more than this fraction of defaulted numeric fields are
  /// rejected.
  double max_defaulted_fraction = 0.05;
};

/// Parses a JSON-Lines trajectory stream. Per-game errors reject only that
/// game; lines that cannot be attributed to any game are reported with an
/// empty game_id.
IngestReport ingest(std::istream& in, CorpusTag tag, const IngestOptions& options = {});
IngestReport ingest(const std::filesystem::path& path, CorpusTag tag,
                    const IngestOptions& options = {});

/// Emits the trajectory format consumed by `ingest`.
void write_trajectory(std::ostream& out, const Corpus& corpus);

// On-disk store: a versioned JSON-Lines file, one game per line.
inline constexpr int kStoreVersion = 1;
void store_save(const std::filesystem::path& path, const Corpus& corpus);
void store_append(const std::filesystem::path& path, const Corpus& corpus);
Corpus store_load(const std::filesystem::path& path);

}  // namespace progeval
