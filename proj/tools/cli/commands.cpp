#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "progeval/arena.hpp"
#include "progeval/dataset.hpp"
#include "progeval/error.hpp"
#include "progeval/estimators.hpp"
#include "progeval/game_data.hpp"
#include "progeval/parallel.hpp"
#include "progeval/profiler.hpp"
#include "progeval/rating.hpp"
#include "progeval/validity.hpp"
#include "progeval/version.hpp"

namespace progeval::cli {
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Context {
  const RunConfig& cfg;
  std::string command;
  std::ostream& log;

  fs::path path(const std::string& name) const { return cfg.dir() / name; }

  std::string csv_header() const {
    return fmt::format("# progeval version={} store={} command={} config_hash={} seed={}\n", kVersion,
                       kStoreVersion, command, cfg.hash(), cfg.seed());
  }

  Json metadata() const {
    return Json{{"tool", "progeval"},  {"version", kVersion}, {"store_version", kStoreVersion},
                {"command", command},   {"config_hash", cfg.hash()}, {"seed", cfg.seed()}};
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

template <typename Writer>
void write_csv(const Context& ctx, const std::string& name, Writer&& writer) {
  std::ostringstream s;
  s << ctx.csv_header();
  writer(s);
  write_text(ctx.path(name), s.str());
  ctx.log << "wrote " << ctx.path(name).string() << "\n";
}

void write_json(const Context& ctx, const std::string& name, Json body) {
  Json j;
  j["metadata"] = ctx.metadata();
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  write_text(ctx.path(name), j.dump(1) + "\n");
  ctx.log << "wrote " << ctx.path(name).string() << "\n";
}

Corpus load_corpus(const Context& ctx) { return store_load(ctx.cfg.corpus_path()); }

Dataset load_dataset(const Context& ctx, const Corpus& corpus) {
  return Dataset::from_corpus(corpus, {ctx.cfg.get_double("gamma"), ctx.cfg.get_double("utilization_cap")});
}

std::string predictions_name(const std::string& kind) { return "predictions_" + kind + ".csv"; }
std::string model_name(const std::string& kind) { return "model_" + kind + ".json"; }

std::optional<PredictionTable> load_predictions(const Context& ctx, const std::string& kind) {
  const auto p = ctx.path(predictions_name(kind));
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  return read_predictions_csv(in);
}

std::vector<double> required_probs(const Context& ctx, const std::string& kind, const Dataset& d) {
  auto table = load_predictions(ctx, kind);
  if (!table) {
    throw Error(ErrorKind::kConfigError, fmt::format("estimator: no {} in {} (run train first)",
                                                     predictions_name(kind), ctx.cfg.dir().string()));
  }
  return align_predictions(*table, d);
}

std::pair<std::string, double> anchor_of(const RunConfig& cfg) {
  const auto& a = cfg.get("anchor");
  const auto eq = a.find('=');
  try {
    return {a.substr(0, eq), std::stod(a.substr(eq + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfigError, "anchor: '" + a + "' is not TYPE=ELO");
  }
}

BtOptions bt_options(const RunConfig& cfg) {
  BtOptions o;
  std::tie(o.anchor, o.anchor_elo) = anchor_of(cfg);
  return o;
}

BootstrapOptions bootstrap_options(const RunConfig& cfg) {
  BootstrapOptions o;
  o.resamples = cfg.get_int("resamples");
  o.seed = cfg.seed();
  return o;
}

struct Standings {
  std::vector<StandingRecord> raw;        // before winner correction
  std::vector<StandingRecord> records;    // corrected (if enabled) and civ-adjusted
  CorrectionSummary correction;
  CivAdjustResult civ;
};

Standings compute_standings(const Context& ctx, const Corpus& corpus, const Dataset& d) {
  const auto probs = required_probs(ctx, ctx.cfg.get("estimator"), d);
  StandingOptions so;
  so.progress_exponent = ctx.cfg.get_double("progress_exponent");
  so.min_coverage = ctx.cfg.get_double("min_coverage");
  Standings s;
  s.raw = aggregate_standing(corpus, d, probs, so);
  s.records = s.raw;
  if (ctx.cfg.get_bool("winner_correction")) s.correction = winner_correction(s.records);
  s.civ = civ_adjust(s.records);
  return s;
}

// Minimal reader for the CSVs written here: '#' lines skipped, no quoting.
Json csv_to_json(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  Json rows = Json::array();
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto c = l.find(',', start);
      out.push_back(l.substr(start, c == std::string::npos ? std::string::npos : c - start));
      if (c == std::string::npos) break;
      start = c + 1;
    }
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    Json row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
      const auto& v = cells[i];
      if (v.empty()) {
        row[header[i]] = nullptr;
        continue;
      }
      long long integer = 0;
      if (auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), integer);
          ec == std::errc() && p == v.data() + v.size()) {
        row[header[i]] = integer;
        continue;
      }
      char* end = nullptr;
      const double num = std::strtod(v.c_str(), &end);
      if (end == v.c_str() + v.size() && std::isfinite(num)) {
        row[header[i]] = num;
      } else {
        row[header[i]] = v;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Trained estimator bundle: one serialized model per fold.
Json trained_to_json(const TrainedEstimator& t) {
  Json j;
  j["format"] = "progeval-trained";
  j["version"] = 1;
  j["kind"] = to_string(t.spec.kind);
  j["fold_of_game"] = t.fold_of_game;
  j["folds"] = Json::array();
  for (const auto& f : t.folds) j["folds"].push_back(Json::parse(fitted_model_to_json(f, t.spec)));
  return j;
}

TrainedEstimator trained_from_json(const std::string& text) {
  const auto j = Json::parse(text);
  if (j.value("format", "") != "progeval-trained") throw Error(ErrorKind::kVersionMismatch, "not a trained model");
  TrainedEstimator t;
  t.fold_of_game = j.at("fold_of_game").get<std::map<std::string, int>>();
  for (const auto& f : j.at("folds")) t.folds.push_back(fitted_model_from_json(f.dump(), &t.spec));
  return t;
}

// ---- commands ----

void cmd_ingest(const Context& ctx) {
  const auto& input = ctx.cfg.get("input");
  if (input.empty()) throw Error(ErrorKind::kConfigError, "input: required for ingest");
  const auto tag = *parse_corpus_tag(ctx.cfg.get("tag"));
  const auto report = ingest(fs::path(input), tag);
  const auto store = ctx.cfg.corpus_path();
  if (ctx.cfg.get_bool("append") && fs::exists(store)) {
    store_append(store, report.games);
  } else {
    store_save(store, report.games);
  }
  ctx.log << fmt::format("ingested {} games, rejected {}\n", report.games.size(), report.rejected.size());
  write_csv(ctx, "ingest_issues.csv", [&](std::ostream& out) {
    out << "game_id,kind,line,message\n";
    for (const auto& i : report.rejected) {
      std::string msg = i.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << fmt::format("{},{},{},{}\n", i.game_id, to_string(i.kind), i.line_no, msg);
    }
  });
  Json body;
  body["games"] = report.games.size();
  body["rejected"] = report.rejected.size();
  body["defaulted_fields"] = report.defaulted_fields;
  body["unknown_fields"] = report.unknown_fields;
  write_json(ctx, "corpus.meta.json", body);
}

void cmd_simulate(const Context& ctx) {
  auto config = standard_arena(ctx.cfg.get_int("games"), ctx.cfg.seed());
  config.players = ctx.cfg.get_int("players");
  config.max_turn = ctx.cfg.get_int("max_turn");
  config.beta = ctx.cfg.get_double("arena_beta");
  const auto output = generate(config);
  store_save(ctx.cfg.corpus_path(), output.corpus);
  ctx.log << fmt::format("simulated {} games\n", output.corpus.size());
  write_json(ctx, "ground_truth.json", Json::parse(planted_effect_report(config, output).to_json()));
  Json body;
  body["games"] = output.corpus.size();
  write_json(ctx, "corpus.meta.json", body);
}

void cmd_features(const Context& ctx) {
  const auto corpus = load_corpus(ctx);
  const auto rows = build_features(corpus, {ctx.cfg.get_double("gamma"), ctx.cfg.get_double("utilization_cap")});
  write_csv(ctx, "features.csv", [&](std::ostream& out) { write_feature_csv(out, rows); });
}

void cmd_train(const Context& ctx) {
  const auto corpus = load_corpus(ctx);
  const auto d = load_dataset(ctx, corpus);
  CvOptions cv;
  cv.folds = ctx.cfg.get_int("folds");
  cv.seed = ctx.cfg.seed();
  cv.mode = parse_split_mode(ctx.cfg.get("split"));
  for (const auto& name : ctx.cfg.get_list("models")) {
    const auto kind = parse_estimator_kind(name);
    auto spec = EstimatorSpec::defaults(kind);
    spec.seed = ctx.cfg.seed();
    if (is_neural(kind) && ctx.cfg.get_int("epochs") > 0) spec.hp.epochs = ctx.cfg.get_int("epochs");
    if (ctx.cfg.get_int("search_trials") > 0 && kind != EstimatorKind::kNaive) {
      SearchOptions so;
      so.trials = ctx.cfg.get_int("search_trials");
      so.seed = ctx.cfg.seed();
      so.lambda_gap = ctx.cfg.get_double("lambda_gap");
      const auto search = hyper_search(spec, d, so);
      write_csv(ctx, "trials_" + name + ".csv", [&](std::ostream& out) { write_trial_log(out, search); });
      spec = search.best;
    }
    ctx.log << "training " << name << "\n";
    const auto result = cross_validate(spec, d, cv);
    write_csv(ctx, predictions_name(name), [&](std::ostream& out) { write_predictions_csv(out, result.predictions); });
    write_json(ctx, model_name(name), trained_to_json(result.model));
  }
}

void cmd_evaluate(const Context& ctx) {
  const auto corpus = load_corpus(ctx);
  const auto d = load_dataset(ctx, corpus);
  MetricsReport report;
  std::map<std::string, std::vector<double>> probs;
  for (const auto& name : ctx.cfg.get_list("models")) {
    const auto table = load_predictions(ctx, name);
    if (!table) {
      ctx.log << "skipping " << name << ": no predictions\n";
      continue;
    }
    probs[name] = align_predictions(*table, d);
    append_report(report, stratified_metrics(name, d, probs[name]));
  }
  if (probs.empty()) throw Error(ErrorKind::kConfigError, "models: no predictions found for any listed model");
  if (!ctx.cfg.get_bool("by_decile")) {
    std::erase_if(report.rows, [](const StratumMetrics& r) { return r.stratum_kind == "decile"; });
  }
  write_csv(ctx, "metrics.csv", [&](std::ostream& out) { write_metrics_csv(out, report); });

  const auto& est = ctx.cfg.get("estimator");
  if (probs.contains(est) && probs.contains("score") && est != "score") {
    const auto agreement = rank_agreement(d, probs.at(est), probs.at("score"));
    write_csv(ctx, "rank_agreement.csv", [&](std::ostream& out) {
      out << "estimator,reference,lo,hi,mean_rho,groups\n";
      for (const auto& b : agreement.bins) {
        out << fmt::format("{},score,{:.2f},{:.2f},{},{}\n", est, b.lo, b.hi,
                           std::isnan(b.mean_rho) ? std::string() : fmt::format("{:.10g}", b.mean_rho), b.count);
      }
      out << fmt::format("{},score,0.00,1.00,{:.10g},{}\n", est, agreement.mean_rho,
                         static_cast<int>(agreement.rho.size()) - agreement.skipped);
    });
  }
  if (const int repeats = ctx.cfg.get_int("importance_repeats"); repeats > 0) {
    const auto model = trained_from_json(read_text(ctx.path(model_name(est))));
    ImportanceOptions io;
    io.repeats = repeats;
    io.seed = ctx.cfg.seed();
    const auto grid = group_permutation_importance(model, d, io);
    write_csv(ctx, "importance.csv", [&](std::ostream& out) { write_importance_csv(out, grid); });
  }
}

void cmd_rate(const Context& ctx) {
  const auto corpus = load_corpus(ctx);
  const auto d = load_dataset(ctx, corpus);
  auto s = compute_standings(ctx, corpus, d);
  const auto bt = bt_options(ctx.cfg);
  const auto table = bootstrap_inference(s.records, bt, bootstrap_options(ctx.cfg));
  write_csv(ctx, "standings.csv", [&](std::ostream& out) { write_standings_csv(out, s.records); });
  write_csv(ctx, "ratings.csv", [&](std::ostream& out) { write_ratings_csv(out, table); });
  write_csv(ctx, "civ_effects.csv", [&](std::ostream& out) { write_civ_effects_csv(out, s.civ); });
  write_csv(ctx, "head_to_head.csv", [&](std::ostream& out) { write_head_to_head_csv(out, head_to_head(s.records)); });

  // Same pipeline without the winner correction, for robustness checks.
  auto uncorrected = s.raw;
  civ_adjust(uncorrected);
  const auto plain = bt_fit(uncorrected, bt);
  write_csv(ctx, "ratings_uncorrected.csv", [&](std::ostream& out) { write_ratings_csv(out, plain); });

  Json body;
  body["estimator"] = ctx.cfg.get("estimator");
  body["anchor"] = table.anchor;
  body["anchor_elo"] = table.anchor_elo;
  body["anchor_present"] = table.anchor_present;
  body["iterations"] = table.iterations;
  body["log_likelihood"] = table.log_likelihood;
  body["likelihood_monotone"] = table.likelihood_monotone;
  body["bootstrap_resamples"] = table.bootstrap_resamples;
  body["bootstrap_dropped"] = table.bootstrap_dropped;
  body["winner_corrections"] = {{"games", s.correction.games},
                                {"corrected", s.correction.corrected},
                                {"rate", s.correction.rate()}};
  body["civ_reference"] = s.civ.reference;
  write_json(ctx, "rating.json", body);
}

void cmd_ablate(const Context& ctx) {
  const auto& target = ctx.cfg.get("target");
  if (target.empty()) throw Error(ErrorKind::kConfigError, "target: required for ablate");
  const auto corpus = load_corpus(ctx);
  const auto d = load_dataset(ctx, corpus);
  const auto s = compute_standings(ctx, corpus, d);
  const auto curve = convergence_ablation(s.records, target, bt_options(ctx.cfg), bootstrap_options(ctx.cfg));
  write_csv(ctx, "ablation.csv", [&](std::ostream& out) { write_ablation_csv(out, curve); });
}

std::map<std::string, std::string> families_of(const Context& ctx) {
  std::map<std::string, std::string> fam;
  for (const auto& pair : ctx.cfg.get_list("families")) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::kConfigError, "families: '" + pair + "' is not TYPE:FAMILY");
    fam[pair.substr(0, colon)] = pair.substr(colon + 1);
  }
  const auto truth = ctx.path("ground_truth.json");
  if (fam.empty() && fs::exists(truth)) {
    const auto doc = Json::parse(read_text(truth));
    for (const auto& t : doc.at("types")) {
      const auto f = t.value("family", "");
      if (!f.empty()) fam[t.at("name").get<std::string>()] = f;
    }
  }
  return fam;
}

void cmd_profile(const Context& ctx) {
  const auto corpus = load_corpus(ctx);
  const auto profile = time_allocation(corpus);
  write_csv(ctx, "allocation.csv", [&](std::ostream& out) { write_allocation_csv(out, profile); });

  std::vector<CommitmentRow> commit;
  if (profile.find(ctx.cfg.get("baseline")) != nullptr) {
    commit = commitment(profile, ctx.cfg.get("baseline"));
    write_csv(ctx, "commitment.csv", [&](std::ostream& out) { write_commitment_csv(out, commit); });
  } else {
    ctx.log << "baseline " << ctx.cfg.get("baseline") << " absent; commitment skipped\n";
  }

  const auto& est = ctx.cfg.get("estimator");
  const auto predictions = load_predictions(ctx, est);
  PivotOptions po;
  po.min_turn = ctx.cfg.get_int("pivot_turn");
  const auto pivots = detect_pivots(corpus, predictions ? &*predictions : nullptr, po);
  const auto flows = pivot_flows(pivots);
  write_csv(ctx, "pivots.csv", [&](std::ostream& out) { write_pivots_csv(out, pivots); });
  write_csv(ctx, "flows.csv", [&](std::ostream& out) { write_flows_csv(out, flows); });

  std::optional<FlowSimilarity> similarity;
  if (const auto fam = families_of(ctx); !fam.empty()) {
    similarity = flow_similarity(flows, fam);
    write_csv(ctx, "flow_similarity.csv", [&](std::ostream& out) {
      out << "type_a,type_b,r,within\n";
      for (const auto& p : similarity->pairs) out << fmt::format("{},{},{:.10g},{}\n", p.a, p.b, p.r, p.within ? 1 : 0);
    });
  }

  std::map<VictoryPath, RatingTable> by_path;
  if (predictions) {
    const auto d = load_dataset(ctx, corpus);
    by_path = rate_by_dominant_path(corpus, compute_standings(ctx, corpus, d).records, bt_options(ctx.cfg));
  }
  const auto best = best_strategy_summary(by_path, profile, flows, ctx.cfg.get_int("min_path_games"));
  write_csv(ctx, "strategy.csv", [&](std::ostream& out) {
    out << "type,most_chosen,most_chosen_share,most_pivoted_to,pivots_in_per_game,best_elo_path,best_elo\n";
    for (const auto& b : best) {
      out << fmt::format("{},{},{:.10g},{},{:.10g},{},{}\n", b.player_type, to_string(b.most_chosen.path),
                         b.most_chosen.value, to_string(b.most_pivoted_to.path), b.most_pivoted_to.value,
                         b.best_elo ? to_string(b.best_elo->path) : "",
                         b.best_elo ? fmt::format("{:.6f}", b.best_elo->value) : std::string());
    }
  });
  write_json(ctx, "profile.json",
             Json::parse(profile_summary_json(profile, commit, pivots, similarity ? &*similarity : nullptr, best)));
}

void cmd_report(const Context& ctx) {
  const std::vector<std::string> tables = {"metrics",     "rank_agreement", "importance", "ratings",
                                           "civ_effects", "ablation",       "allocation", "commitment",
                                           "flows",       "strategy"};
  const std::vector<std::string> documents = {"rating", "profile", "ground_truth"};
  Json body;
  body["tables"] = Json::object();
  for (const auto& t : tables) {
    const auto p = ctx.path(t + ".csv");
    if (fs::exists(p)) body["tables"][t] = csv_to_json(read_text(p));
  }
  for (const auto& doc : documents) {
    const auto p = ctx.path(doc + ".json");
    if (!fs::exists(p)) continue;
    auto j = Json::parse(read_text(p));
    j.erase("metadata");
    body[doc] = std::move(j);
  }
  if (body["tables"].empty()) throw Error(ErrorKind::kConfigError, "dir: no artifacts to report");
  const auto formats = ctx.cfg.get_list("formats");
  if (std::find(formats.begin(), formats.end(), "json") != formats.end()) write_json(ctx, "report.json", body);
  if (std::find(formats.begin(), formats.end(), "csv") == formats.end()) return;
  write_csv(ctx, "report.csv", [&](std::ostream& out) {
    out << "section,item,key,value\n";
    auto cell = [](const Json& v) {
      return v.is_null() ? std::string() : v.is_string() ? v.get<std::string>() : fmt::format("{:.10g}", v.get<double>());
    };
    if (body["tables"].contains("metrics")) {
      for (const auto& r : body["tables"]["metrics"]) {
        if (r.value("stratum_kind", "") != "overall") continue;
        for (const char* k : {"log_loss", "brier", "auc"}) {
          if (r.contains(k)) out << fmt::format("metrics,{},{},{}\n", cell(r["estimator"]), k, cell(r[k]));
        }
      }
    }
    if (body["tables"].contains("ratings")) {
      for (const auto& r : body["tables"]["ratings"]) {
        for (const char* k : {"elo", "ci_low", "ci_high", "p"}) {
          out << fmt::format("ratings,{},{},{}\n", cell(r["type"]), k, cell(r[k]));
        }
      }
    }
    if (body["tables"].contains("strategy")) {
      for (const auto& r : body["tables"]["strategy"]) {
        for (const char* k : {"most_chosen", "most_pivoted_to", "best_elo_path"}) {
          out << fmt::format("strategy,{},{},{}\n", cell(r["type"]), k, cell(r[k]));
        }
      }
    }
  });
}

using Handler = void (*)(const Context&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h = {
      {"ingest", cmd_ingest}, {"simulate", cmd_simulate}, {"features", cmd_features},
      {"train", cmd_train},   {"evaluate", cmd_evaluate}, {"rate", cmd_rate},
      {"ablate", cmd_ablate}, {"profile", cmd_profile},   {"report", cmd_report}};
  return h;
}

const std::map<std::string, std::string>& command_help() {
  static const std::map<std::string, std::string> h = {
      {"ingest", "parse a trajectory file into the corpus store"},
      {"simulate", "generate a synthetic corpus with known strengths"},
      {"features", "write the 23-feature table"},
      {"train", "cross-validate estimators and write out-of-fold predictions"},
      {"evaluate", "stratified metrics, rank agreement, permutation importance"},
      {"rate", "standings, civilization adjustment, Bradley-Terry ELO with bootstrap"},
      {"ablate", "rating convergence as a target type's games are added"},
      {"profile", "victory-path allocation, commitment, pivots and flows"},
      {"report", "collate artifacts into report.csv and report.json"}};
  return h;
}

void emit_error(std::ostream& err, const std::string& command, std::string_view kind, const std::string& message) {
  err << Json{{"error", kind}, {"command", command}, {"message", message}}.dump() << "\n";
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, h] : handlers()) n.push_back(name);
    return n;
  }();
  return names;
}

void run_command(const std::string& command, const RunConfig& config, std::ostream& log) {
  for (const auto& [name, handler] : handlers()) {
    if (name != command) continue;
    config.validate();
    set_max_threads(static_cast<std::size_t>(config.get_int("threads")));
    fs::create_directories(config.dir());
    handler(Context{config, command, log});
    return;
  }
  throw Error(ErrorKind::kUnknownCommand, command);
}

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto& names = command_names();
  if (argc >= 2 && argv[1][0] != '-' && std::find(names.begin(), names.end(), argv[1]) == names.end()) {
    emit_error(err, argv[1], to_string(ErrorKind::kUnknownCommand),
               fmt::format("'{}' is not one of: {}", argv[1], fmt::join(names, ", ")));
    return 2;
  }

  CLI::App app{fmt::format("progeval {}: win-probability estimation and rating of multiplayer games", kVersion)};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, bool>> flags;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, command_help().at(name));
    for (const auto& key : config_keys()) {
      std::string dashed = key.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string spec = "--" + dashed;
      if (dashed != key.name) spec += ",--" + key.name;
      if (key.name == "models") spec += ",--model";
      const std::string help = key.default_value.empty() ? key.help : key.help + " [" + key.default_value + "]";
      if (key.flag) {
        options[name][key.name] = sub->add_flag(spec, flags[name][key.name], help);
      } else {
        options[name][key.name] = sub->add_option(spec, values[name][key.name], help);
      }
    }
  }

  std::string command = argc >= 2 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    emit_error(err, command, to_string(ErrorKind::kConfigError), e.what());
    return 2;
  }

  try {
    command = app.get_subcommands().front()->get_name();
    RunConfig cfg;
    auto& opts = options[command];
    if (opts["config"]->count() > 0) cfg.load_file(values[command]["config"]);
    for (const auto& key : config_keys()) {
      if (key.name == "config" || opts[key.name]->count() == 0) continue;
      cfg.set(key.name, key.flag ? (flags[command][key.name] ? "true" : "false") : values[command][key.name]);
    }
    run_command(command, cfg, err);
    out << fmt::format("{} ok config_hash={} dir={}\n", command, cfg.hash(), cfg.dir().string());
    return 0;
  } catch (const Error& e) {
    const bool usage = e.kind() == ErrorKind::kConfigError || e.kind() == ErrorKind::kUnknownCommand;
    emit_error(err, command, to_string(e.kind()), e.what());
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    emit_error(err, command, "Internal", e.what());
    return 1;
  }
}

}  // namespace progeval::cli
