#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "progeval/error.hpp"
#include "progeval/estimators.hpp"
#include "progeval/game_data.hpp"
#include "progeval/random.hpp"

namespace progeval::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorKind::kConfigError, fmt::format("{}: '{}' is not {}", key, value, want));
}

const std::set<std::string> kUnhashed = {"dir", "threads", "config"};

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"config", "", "key=value config file (flags override it)"},
      {"dir", "run", "working directory for all artifacts"},
      {"seed", "42", "master random seed"},
      {"threads", "0", "worker thread cap (0 = all cores)"},
      {"corpus", "", "corpus store (default <dir>/corpus.jsonl)"},
      {"input", "", "ingest: trajectory JSON-Lines file"},
      {"tag", "llm", "ingest: corpus tag (llm|vpai_selfplay|synthetic)"},
      {"append", "false", "ingest: append to an existing corpus store", true},
      {"games", "300", "simulate: number of games"},
      {"players", "8", "simulate: players per game"},
      {"max_turn", "100", "simulate: turns per game"},
      {"arena_beta", "2.5", "simulate: winner temperature"},
      {"gamma", "0.25", "city-count exponent for adjusted yields"},
      {"utilization_cap", "2.0", "military utilization clip"},
      {"models", "naive,score,baseline,mlp,grouped_mlp,interaction_mlp,attention_mlp",
       "train/evaluate: estimator kinds"},
      {"folds", "5", "train: cross-validation folds"},
      {"split", "grouped_kfold", "train: grouped_kfold|llm_vs_nonllm|nonllm_vs_llm"},
      {"epochs", "0", "train: epoch override for neural models (0 = default)"},
      {"search_trials", "0", "train: random-search trials before cross-validation"},
      {"lambda_gap", "1.0", "train: generalisation-gap penalty in the search objective"},
      {"by_decile", "false", "evaluate: include per-decile strata", true},
      {"importance_repeats", "0", "evaluate: permutation-importance repeats for --estimator"},
      {"estimator", "attention_mlp", "rate/ablate/profile: predictions to use"},
      {"anchor", "VPAI=1500", "rate/ablate: anchor type and its ELO"},
      {"resamples", "1000", "rate/ablate: bootstrap resamples"},
      {"progress_exponent", "1.0", "rate: turn-progress weight exponent"},
      {"min_coverage", "0.5", "rate: minimum fraction of predicted turns per game"},
      {"winner_correction", "true", "rate: lift each winner to the game maximum"},
      {"target", "", "ablate: player type whose games are added one at a time"},
      {"pivot_turn", "25", "profile: pivots count only after this turn"},
      {"baseline", "VPAI", "profile: commitment baseline type"},
      {"min_path_games", "5", "profile: games needed for a per-path ELO"},
      {"families", "", "profile: type:family pairs for flow similarity"},
      {"formats", "csv,json", "report: output formats"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfigError, "config: cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kConfigError, fmt::format("config line {}: expected key = value", line_no));
    }
    set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  std::string k = key;
  std::replace(k.begin(), k.end(), '-', '_');
  if (k == "model") k = "models";
  auto it = values_.find(k);
  if (it == values_.end()) throw Error(ErrorKind::kConfigError, key + ": unknown key");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::kConfigError, key + ": unknown key");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const auto& v = get(key);
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const auto& v = get(key);
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = std::min(v.find(',', start), v.size());
    const auto item = trim(std::string_view(v).substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::filesystem::path RunConfig::dir() const { return get("dir"); }

std::filesystem::path RunConfig::corpus_path() const {
  const auto& c = get("corpus");
  return c.empty() ? dir() / "corpus.jsonl" : std::filesystem::path(c);
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    if (!kUnhashed.contains(k)) out += k + "=" + v + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return fmt::format("{:016x}", hash_string(canonical())); }

void RunConfig::validate() const {
  get_u64("seed");
  get_int("threads");
  for (const auto& m : get_list("models")) parse_estimator_kind(m);
  parse_estimator_kind(get("estimator"));
  if (!parse_corpus_tag(get("tag"))) bad_value("tag", get("tag"), "a corpus tag");
  parse_split_mode(get("split"));
  for (const char* k : {"games", "players", "max_turn", "folds", "epochs", "search_trials", "importance_repeats",
                        "resamples", "pivot_turn", "min_path_games"}) {
    if (get_int(k) < 0) bad_value(k, get(k), "non-negative");
  }
  for (const char* k : {"arena_beta", "gamma", "utilization_cap", "lambda_gap", "progress_exponent", "min_coverage"}) {
    get_double(k);
  }
  for (const char* k : {"append", "by_decile", "winner_correction"}) get_bool(k);
  const auto& anchor = get("anchor");
  const auto eq = anchor.find('=');
  if (eq == std::string::npos || eq == 0) bad_value("anchor", anchor, "TYPE=ELO");
  for (const auto& f : get_list("formats")) {
    if (f != "csv" && f != "json") bad_value("formats", f, "csv or json");
  }
}

}  // namespace progeval::cli
