#include "progeval/game_data.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <variant>

#include <nlohmann/json.hpp>

namespace progeval {
namespace {

using nlohmann::json;

enum class FieldKind { kCount, kNonneg, kSigned, kFraction };

struct FieldDesc {
  const char* name;
  FieldKind kind;
  std::variant<std::int64_t RawSignals::*, double RawSignals::*> member;
};

const std::vector<FieldDesc>& field_table() {
  static const std::vector<FieldDesc> table = {
      {"score", FieldKind::kNonneg, &RawSignals::score},
      {"technologies", FieldKind::kCount, &RawSignals::technologies},
      {"policies", FieldKind::kCount, &RawSignals::policies},
      {"science", FieldKind::kNonneg, &RawSignals::science},
      {"culture", FieldKind::kNonneg, &RawSignals::culture},
      {"tourism", FieldKind::kNonneg, &RawSignals::tourism},
      {"gold", FieldKind::kNonneg, &RawSignals::gold},
      {"production", FieldKind::kNonneg, &RawSignals::production},
      {"food", FieldKind::kNonneg, &RawSignals::food},
      {"faith", FieldKind::kNonneg, &RawSignals::faith},
      {"cities", FieldKind::kCount, &RawSignals::cities},
      {"population", FieldKind::kCount, &RawSignals::population},
      {"votes", FieldKind::kCount, &RawSignals::votes},
      {"minor_allies", FieldKind::kCount, &RawSignals::minor_allies},
      {"defensive_pacts", FieldKind::kCount, &RawSignals::defensive_pacts},
      {"friendships", FieldKind::kCount, &RawSignals::friendships},
      {"military_strength", FieldKind::kNonneg, &RawSignals::military_strength},
      {"military_supply", FieldKind::kNonneg, &RawSignals::military_supply},
      {"active_wars", FieldKind::kCount, &RawSignals::active_wars},
      {"truces", FieldKind::kCount, &RawSignals::truces},
      {"happiness_percentage", FieldKind::kSigned, &RawSignals::happiness_percentage},
      {"highest_war_weariness", FieldKind::kNonneg, &RawSignals::highest_war_weariness},
      {"religion_percentage", FieldKind::kFraction, &RawSignals::religion_percentage},
  };
  return table;
}

// Returns an error message, or empty on success.
std::string set_field(RawSignals& s, const FieldDesc& f, const json& v) {
  if (!v.is_number()) return std::string("field '") + f.name + "' is not a number";
  const double x = v.get<double>();
  if (!std::isfinite(x)) return std::string("field '") + f.name + "' is not finite";
  switch (f.kind) {
    case FieldKind::kCount:
      if (x < 0 || x != std::floor(x)) {
        return std::string("field '") + f.name + "' must be a nonnegative integer";
      }
      break;
    case FieldKind::kNonneg:
      if (x < 0) return std::string("field '") + f.name + "' must be nonnegative";
      break;
    case FieldKind::kFraction:
      if (x < 0 || x > 1) return std::string("field '") + f.name + "' must lie in [0,1]";
      break;
    case FieldKind::kSigned:
      break;
  }
  std::visit(
      [&](auto member) {
        using M = std::remove_reference_t<decltype(s.*member)>;
        s.*member = static_cast<M>(x);
      },
      f.member);
  return {};
}

json signals_to_json(int seat, const RawSignals& s) {
  json j = json::object();
  j["seat"] = seat;
  for (const auto& f : field_table()) {
    std::visit([&](auto member) { j[f.name] = s.*member; }, f.member);
  }
  j["victory_pursuit"] = std::string(to_string(s.victory_pursuit));
  return j;
}

struct PendingLine {
  int line_no;
  json value;
};

struct GameAccumulator {
  std::optional<PendingLine> header;
  std::vector<PendingLine> turns;
  bool duplicate_header = false;
  int duplicate_line = 0;
  std::size_t first_seen = 0;
};

class GameRejected : public std::exception {
 public:
  GameRejected(ErrorKind kind, int line, std::string message)
      : kind(kind), line(line), message(std::move(message)) {}
  ErrorKind kind;
  int line;
  std::string message;
};

void write_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

class FileLock {
 public:
  FileLock(const std::filesystem::path& path, int mode) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ >= 0) ::flock(fd_, mode);
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

json store_header() {
  json fields = json::array();
  for (const auto& f : field_table()) fields.push_back(f.name);
  return json{{"format", "progeval-store"}, {"version", kStoreVersion}, {"fields", fields}};
}

json game_to_store_json(const GameRecord& g) {
  json seats = json::array();
  for (const auto& s : g.seats) {
    seats.push_back({{"seat", s.seat_id}, {"player_type", s.player_type},
                     {"civilization", s.civilization}});
  }
  json snaps = json::array();
  for (const auto& snap : g.snapshots) {
    json players = json::array();
    for (const auto& sig : snap.signals) {
      json row = json::array();
      for (const auto& f : field_table()) {
        std::visit([&](auto member) { row.push_back(sig.*member); }, f.member);
      }
      row.push_back(static_cast<int>(sig.victory_pursuit));
      players.push_back(std::move(row));
    }
    snaps.push_back({{"turn", snap.turn}, {"players", std::move(players)}});
  }
  return json{{"game_id", g.game_id},
              {"max_turn", g.max_turn},
              {"seats", seats},
              {"winner_seat", g.winner_seat},
              {"victory_type", std::string(to_string(g.victory_type))},
              {"winner_declared", g.winner_declared},
              {"corpus_tag", std::string(to_string(g.corpus_tag))},
              {"snapshots", std::move(snaps)}};
}

GameRecord game_from_store_json(const json& j) {
  GameRecord g;
  g.game_id = j.at("game_id").get<std::string>();
  g.max_turn = j.at("max_turn").get<int>();
  for (const auto& s : j.at("seats")) {
    g.seats.push_back({s.at("seat").get<int>(), s.at("player_type").get<std::string>(),
                       s.at("civilization").get<std::string>()});
  }
  g.winner_seat = j.at("winner_seat").get<int>();
  g.victory_type = parse_victory_type(j.at("victory_type").get<std::string>()).value();
  g.winner_declared = j.at("winner_declared").get<bool>();
  g.corpus_tag = parse_corpus_tag(j.at("corpus_tag").get<std::string>()).value();
  const auto& table = field_table();
  for (const auto& sj : j.at("snapshots")) {
    TurnSnapshot snap;
    snap.turn = sj.at("turn").get<int>();
    for (const auto& row : sj.at("players")) {
      RawSignals sig;
      for (std::size_t k = 0; k < table.size(); ++k) {
        std::visit(
            [&](auto member) {
              using M = std::remove_reference_t<decltype(sig.*member)>;
              sig.*member = row.at(k).get<M>();
            },
            table[k].member);
      }
      sig.victory_pursuit = static_cast<VictoryPath>(row.at(table.size()).get<int>());
      snap.signals.push_back(sig);
    }
    g.snapshots.push_back(std::move(snap));
  }
  return g;
}

void check_store_header(const std::string& line, const std::filesystem::path& path) {
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception&) {
    throw Error(ErrorKind::kVersionMismatch, path.string() + ": missing store header");
  }
  if (!h.is_object() || h.value("format", "") != "progeval-store") {
    throw Error(ErrorKind::kVersionMismatch, path.string() + ": not a progeval store");
  }
  if (h.value("version", -1) != kStoreVersion) {
    throw Error(ErrorKind::kVersionMismatch,
                path.string() + ": store version " + h.value("version", json(-1)).dump() +
                    ", expected " + std::to_string(kStoreVersion));
  }
  if (h.at("fields") != store_header().at("fields")) {
    throw Error(ErrorKind::kVersionMismatch, path.string() + ": field layout differs");
  }
}

}  // namespace

std::string_view to_string(VictoryPath p) {
  switch (p) {
    case VictoryPath::kDomination: return "Domination";
    case VictoryPath::kScience: return "Science";
    case VictoryPath::kCulture: return "Culture";
    case VictoryPath::kDiplomatic: return "Diplomatic";
  }
  return "?";
}

std::string_view to_string(VictoryType v) {
  switch (v) {
    case VictoryType::kDomination: return "Domination";
    case VictoryType::kScience: return "Science";
    case VictoryType::kCulture: return "Culture";
    case VictoryType::kDiplomatic: return "Diplomatic";
    case VictoryType::kTime: return "Time";
  }
  return "?";
}

std::string_view to_string(CorpusTag t) {
  switch (t) {
    case CorpusTag::kLlm: return "llm";
    case CorpusTag::kVpaiSelfplay: return "vpai_selfplay";
    case CorpusTag::kSynthetic: return "synthetic";
  }
  return "?";
}

std::optional<VictoryPath> parse_victory_path(std::string_view s) {
  for (auto p : kVictoryPaths) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::optional<VictoryType> parse_victory_type(std::string_view s) {
  for (auto v : kVictoryTypes) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<CorpusTag> parse_corpus_tag(std::string_view s) {
  for (auto t : {CorpusTag::kLlm, CorpusTag::kVpaiSelfplay, CorpusTag::kSynthetic}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

const std::vector<std::string>& raw_signal_field_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : field_table()) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

void validate(const GameRecord& game) {
  const std::string& id = game.game_id;
  if (id.empty()) throw Error(ErrorKind::kInvalidGame, "empty game_id");
  if (game.max_turn <= 0) throw Error(ErrorKind::kInvalidGame, id + ": max_turn must be positive");
  if (game.seats.size() < 2) throw Error(ErrorKind::kInvalidGame, id + ": fewer than 2 seats");
  for (std::size_t i = 0; i < game.seats.size(); ++i) {
    if (game.seats[i].seat_id != static_cast<int>(i)) {
      throw Error(ErrorKind::kInvalidGame, id + ": seat ids must be contiguous from 0");
    }
    if (game.seats[i].player_type.empty()) {
      throw Error(ErrorKind::kInvalidGame, id + ": empty player_type");
    }
  }
  if (game.winner_seat < 0 || game.winner_seat >= game.num_seats()) {
    throw Error(ErrorKind::kInvalidGame, id + ": winner_seat out of range");
  }
  if (game.snapshots.size() < 2) throw Error(ErrorKind::kInvalidGame, id + ": fewer than 2 snapshots");
  int prev = -1;
  for (const auto& snap : game.snapshots) {
    if (snap.turn <= prev) {
      throw Error(ErrorKind::kNonMonotoneTurns, id + ": turn " + std::to_string(snap.turn));
    }
    if (snap.turn < 0 || snap.turn > game.max_turn) {
      throw Error(ErrorKind::kInvalidGame, id + ": turn outside [0, max_turn]");
    }
    if (snap.signals.size() != game.seats.size()) {
      throw Error(ErrorKind::kMissingSeatInSnapshot,
                  id + ": turn " + std::to_string(snap.turn) + " has " +
                      std::to_string(snap.signals.size()) + " seats");
    }
    for (const auto& s : snap.signals) {
      if (s.religion_percentage < 0 || s.religion_percentage > 1 || s.military_supply < 0) {
        throw Error(ErrorKind::kInvalidGame, id + ": signal out of range at turn " +
                                                 std::to_string(snap.turn));
      }
    }
    prev = snap.turn;
  }
}

WinnerResolution winner_of(const GameRecord& game, std::optional<int> declared_seat,
                           std::optional<VictoryType> declared_type) {
  if (declared_seat) {
    return {*declared_seat, declared_type.value_or(VictoryType::kTime)};
  }
  if (game.snapshots.empty()) throw Error(ErrorKind::kEmptyGame, game.game_id);
  const auto& final_signals = game.snapshots.back().signals;
  if (final_signals.empty()) throw Error(ErrorKind::kEmptyGame, game.game_id);
  int best = 0;
  for (int i = 1; i < static_cast<int>(final_signals.size()); ++i) {
    if (final_signals[i].score > final_signals[best].score) best = i;
  }
  return {best, VictoryType::kTime};
}

WinnerResolution winner_of(const GameRecord& game) {
  if (game.winner_declared) return {game.winner_seat, game.victory_type};
  return winner_of(game, std::nullopt, std::nullopt);
}

IngestReport ingest(std::istream& in, CorpusTag tag, const IngestOptions& options) {
  IngestReport report;
  std::unordered_map<std::string, GameAccumulator> games;
  std::vector<std::string> order;

  auto touch = [&](const std::string& id) -> GameAccumulator& {
    auto [it, inserted] = games.try_emplace(id);
    if (inserted) {
      it->second.first_seen = order.size();
      order.push_back(id);
    }
    return it->second;
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json value;
    try {
      value = json::parse(line);
    } catch (const json::exception& e) {
      report.rejected.push_back({"", ErrorKind::kMalformedLine, line_no, "invalid JSON"});
      continue;
    }
    if (!value.is_object() || !value.contains("kind") || !value["kind"].is_string() ||
        !value.contains("game_id") || !value["game_id"].is_string()) {
      report.rejected.push_back(
          {"", ErrorKind::kMalformedLine, line_no, "line lacks string 'kind'/'game_id'"});
      continue;
    }
    const std::string id = value["game_id"].get<std::string>();
    const std::string kind = value["kind"].get<std::string>();
    auto& acc = touch(id);
    if (kind == "game") {
      if (acc.header) {
        acc.duplicate_header = true;
        acc.duplicate_line = line_no;
      } else {
        acc.header = PendingLine{line_no, std::move(value)};
      }
    } else if (kind == "turn") {
      acc.turns.push_back({line_no, std::move(value)});
    } else {
      report.rejected.push_back({id, ErrorKind::kMalformedLine, line_no, "unknown kind '" + kind + "'"});
    }
  }

  const auto& table = field_table();
  static const std::set<std::string> kTurnKeys = {"kind", "game_id", "turn", "players"};
  static const std::set<std::string> kHeaderKeys = {"kind",   "game_id",     "max_turn",
                                                    "seats",  "winner_seat", "victory_type"};

  for (const auto& id : order) {
    auto& acc = games[id];
    std::map<std::string, std::int64_t> defaulted;
    std::map<std::string, std::int64_t> unknown;
    try {
      if (acc.duplicate_header) {
        throw GameRejected(ErrorKind::kDuplicateGameId, acc.duplicate_line, "game header repeated");
      }
      if (!acc.header) {
        throw GameRejected(ErrorKind::kMalformedLine, acc.turns.empty() ? 0 : acc.turns[0].line_no,
                           "turn lines without a game header");
      }
      const json& h = acc.header->value;
      const int hline = acc.header->line_no;
      GameRecord g;
      g.game_id = id;
      g.corpus_tag = tag;
      for (auto it = h.begin(); it != h.end(); ++it) {
        if (!kHeaderKeys.count(it.key())) ++unknown[it.key()];
      }
      if (!h.contains("max_turn") || !h["max_turn"].is_number_integer() || h["max_turn"].get<int>() <= 0) {
        throw GameRejected(ErrorKind::kMalformedLine, hline, "max_turn must be a positive integer");
      }
      g.max_turn = h["max_turn"].get<int>();
      if (!h.contains("seats") || !h["seats"].is_array()) {
        throw GameRejected(ErrorKind::kMalformedLine, hline, "seats must be an array");
      }
      for (const auto& s : h["seats"]) {
        if (!s.is_object() || !s.contains("seat") || !s["seat"].is_number_integer() ||
            !s.contains("player_type") || !s["player_type"].is_string()) {
          throw GameRejected(ErrorKind::kMalformedLine, hline, "seat entry malformed");
        }
        g.seats.push_back({s["seat"].get<int>(), s["player_type"].get<std::string>(),
                           s.value("civilization", std::string{})});
      }
      std::sort(g.seats.begin(), g.seats.end(),
                [](const PlayerSeat& a, const PlayerSeat& b) { return a.seat_id < b.seat_id; });
      for (std::size_t i = 0; i < g.seats.size(); ++i) {
        if (g.seats[i].seat_id != static_cast<int>(i)) {
          throw GameRejected(ErrorKind::kMalformedLine, hline, "seat ids must be contiguous from 0");
        }
      }
      std::optional<int> declared_seat;
      std::optional<VictoryType> declared_type;
      if (h.contains("winner_seat") && !h["winner_seat"].is_null()) {
        if (!h["winner_seat"].is_number_integer()) {
          throw GameRejected(ErrorKind::kMalformedLine, hline, "winner_seat must be int or null");
        }
        declared_seat = h["winner_seat"].get<int>();
      }
      if (h.contains("victory_type") && !h["victory_type"].is_null()) {
        if (!h["victory_type"].is_string() ||
            !parse_victory_type(h["victory_type"].get<std::string>())) {
          throw GameRejected(ErrorKind::kMalformedLine, hline, "unknown victory_type");
        }
        declared_type = parse_victory_type(h["victory_type"].get<std::string>());
      }
      if (declared_seat.has_value() != declared_type.has_value()) {
        throw GameRejected(ErrorKind::kMalformedLine, hline,
                           "winner_seat and victory_type must both be set or both null");
      }

      const std::size_t n_seats = g.seats.size();
      std::int64_t n_defaulted = 0;
      for (const auto& tl : acc.turns) {
        const json& t = tl.value;
        for (auto it = t.begin(); it != t.end(); ++it) {
          if (!kTurnKeys.count(it.key())) ++unknown[it.key()];
        }
        if (!t.contains("turn") || !t["turn"].is_number_integer() || t["turn"].get<int>() < 0) {
          throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "turn must be a nonnegative integer");
        }
        TurnSnapshot snap;
        snap.turn = t["turn"].get<int>();
        if (!g.snapshots.empty()) {
          if (snap.turn == g.snapshots.back().turn) {
            throw GameRejected(ErrorKind::kDuplicateGameId, tl.line_no,
                               "duplicate snapshot for turn " + std::to_string(snap.turn));
          }
          if (snap.turn < g.snapshots.back().turn) {
            bool seen = std::any_of(g.snapshots.begin(), g.snapshots.end(),
                                    [&](const TurnSnapshot& s) { return s.turn == snap.turn; });
            throw GameRejected(seen ? ErrorKind::kDuplicateGameId : ErrorKind::kNonMonotoneTurns,
                               tl.line_no,
                               (seen ? "duplicate snapshot for turn " : "turn decreases to ") +
                                   std::to_string(snap.turn));
          }
        }
        if (snap.turn > g.max_turn) {
          throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "turn exceeds max_turn");
        }
        if (!t.contains("players") || !t["players"].is_array()) {
          throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "players must be an array");
        }
        std::vector<std::optional<RawSignals>> by_seat(n_seats);
        for (const auto& p : t["players"]) {
          if (!p.is_object() || !p.contains("seat") || !p["seat"].is_number_integer()) {
            throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "player entry lacks integer seat");
          }
          const int seat = p["seat"].get<int>();
          if (seat < 0 || seat >= static_cast<int>(n_seats)) {
            throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "unknown seat " + std::to_string(seat));
          }
          if (by_seat[seat]) {
            throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "seat listed twice");
          }
          RawSignals sig;
          for (const auto& f : table) {
            auto it = p.find(f.name);
            if (it == p.end() || it->is_null()) {
              ++defaulted[f.name];
              ++n_defaulted;
              continue;
            }
            if (auto err = set_field(sig, f, *it); !err.empty()) {
              throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, err);
            }
          }
          auto vp = p.find("victory_pursuit");
          if (vp == p.end() || !vp->is_string() || !parse_victory_path(vp->get<std::string>())) {
            throw GameRejected(ErrorKind::kMalformedLine, tl.line_no, "victory_pursuit missing or unknown");
          }
          sig.victory_pursuit = *parse_victory_path(vp->get<std::string>());
          for (auto it = p.begin(); it != p.end(); ++it) {
            if (it.key() == "seat" || it.key() == "victory_pursuit") continue;
            if (std::none_of(table.begin(), table.end(),
                             [&](const FieldDesc& f) { return it.key() == f.name; })) {
              ++unknown[it.key()];
            }
          }
          by_seat[seat] = sig;
        }
        for (std::size_t s = 0; s < n_seats; ++s) {
          if (!by_seat[s]) {
            throw GameRejected(ErrorKind::kMissingSeatInSnapshot, tl.line_no,
                               "seat " + std::to_string(s) + " missing at turn " +
                                   std::to_string(snap.turn));
          }
          snap.signals.push_back(*by_seat[s]);
        }
        g.snapshots.push_back(std::move(snap));
      }
      const double total_fields =
          static_cast<double>(table.size() * n_seats * std::max<std::size_t>(1, g.snapshots.size()));
      if (static_cast<double>(n_defaulted) > options.max_defaulted_fraction * total_fields) {
        throw GameRejected(ErrorKind::kInvalidGame, hline,
                           "too many defaulted fields (" + std::to_string(n_defaulted) + ")");
      }
      if (g.snapshots.empty()) throw GameRejected(ErrorKind::kEmptyGame, hline, "no snapshots");
      if (declared_seat && (*declared_seat < 0 || *declared_seat >= static_cast<int>(n_seats))) {
        throw GameRejected(ErrorKind::kInvalidGame, hline, "winner_seat out of range");
      }
      const auto w = winner_of(g, declared_seat, declared_type);
      g.winner_seat = w.seat;
      g.victory_type = w.victory_type;
      g.winner_declared = declared_seat.has_value();
      try {
        validate(g);
      } catch (const Error& e) {
        throw GameRejected(e.kind(), hline, e.context());
      }
      for (const auto& [k, v] : defaulted) report.defaulted_fields[k] += v;
      for (const auto& [k, v] : unknown) report.unknown_fields[k] += v;
      report.games.push_back(std::move(g));
    } catch (const GameRejected& r) {
      report.rejected.push_back({id, r.kind, r.line, r.message});
    }
  }
  return report;
}

IngestReport ingest(const std::filesystem::path& path, CorpusTag tag, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return ingest(in, tag, options);
}

void write_trajectory(std::ostream& out, const Corpus& corpus) {
  for (const auto& g : corpus) {
    json seats = json::array();
    for (const auto& s : g.seats) {
      seats.push_back({{"seat", s.seat_id}, {"player_type", s.player_type},
                       {"civilization", s.civilization}});
    }
    json header = {{"kind", "game"}, {"game_id", g.game_id}, {"max_turn", g.max_turn},
                   {"seats", seats}};
    if (g.winner_declared) {
      header["winner_seat"] = g.winner_seat;
      header["victory_type"] = std::string(to_string(g.victory_type));
    } else {
      header["winner_seat"] = nullptr;
      header["victory_type"] = nullptr;
    }
    write_line(out, header);
    for (const auto& snap : g.snapshots) {
      json players = json::array();
      for (std::size_t s = 0; s < snap.signals.size(); ++s) {
        players.push_back(signals_to_json(static_cast<int>(s), snap.signals[s]));
      }
      write_line(out, json{{"kind", "turn"}, {"game_id", g.game_id}, {"turn", snap.turn},
                           {"players", std::move(players)}});
    }
  }
}

void store_save(const std::filesystem::path& path, const Corpus& corpus) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    write_line(out, store_header());
    for (const auto& g : corpus) write_line(out, game_to_store_json(g));
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void store_append(const std::filesystem::path& path, const Corpus& corpus) {
  if (!std::filesystem::exists(path)) {
    store_save(path, corpus);
    return;
  }
  FileLock lock(path, LOCK_EX);
  {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    check_store_header(first, path);
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::kIo, "cannot append to " + path.string());
  for (const auto& g : corpus) write_line(out, game_to_store_json(g));
}

Corpus store_load(const std::filesystem::path& path) {
  FileLock lock(path, LOCK_SH);
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kVersionMismatch, path.string() + ": empty file");
  check_store_header(line, path);
  Corpus corpus;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      corpus.push_back(game_from_store_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kIo, path.string() + ": corrupt store line: " + e.what());
    }
  }
  return corpus;
}

}  // namespace progeval
