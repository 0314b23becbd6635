#include "searchbound/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "searchbound/boundary.hpp"
#include "searchbound/env.hpp"
#include "searchbound/io.hpp"
#include "searchbound/metrics.hpp"
#include "searchbound/optimizer.hpp"
#include "searchbound/policy.hpp"
#include "searchbound/reward.hpp"
#include "searchbound/rng.hpp"
#include "searchbound/trajectory.hpp"

namespace fs = std::filesystem;

namespace searchbound {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

struct EnvFileConfig {
  uint64_t seed = 42;
  WorldConfig world;
  QuestionConfig questions;
  ProfileConfig profile;
};

void check_keys(const nlohmann::json& j, const std::string& path, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::runtime_error(path + ": unknown " + where + " key \"" + item.key() + "\"");
    }
  }
}

int require_int(const nlohmann::json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) {
    throw std::runtime_error(path + ": \"" + std::string(key) + "\" must be an integer");
  }
  return j[key].get<int>();
}

double require_double(const nlohmann::json& j, const std::string& path, const char* key,
                      double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    throw std::runtime_error(path + ": \"" + std::string(key) + "\" must be a number");
  }
  return j[key].get<double>();
}

EnvFileConfig load_env_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad config json: " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error(path + ": config must be a json object");
  check_keys(j, path, "config", {"seed", "world", "questions", "profile"});
  EnvFileConfig cfg;
  if (j.contains("seed")) {
    const nlohmann::json& s = j["seed"];
    bool ok = s.is_number_unsigned() || (s.is_number_integer() && s.get<int64_t>() >= 0);
    if (!ok) throw std::runtime_error(path + ": \"seed\" must be a non-negative integer");
    cfg.seed = s.get<uint64_t>();
  }
  if (j.contains("world")) {
    const nlohmann::json& w = j["world"];
    if (!w.is_object()) throw std::runtime_error(path + ": \"world\" must be an object");
    check_keys(w, path, "world",
               {"entity_count", "relation_count", "fact_density", "max_chain_depth"});
    cfg.world.entity_count = require_int(w, path, "entity_count", cfg.world.entity_count);
    cfg.world.relation_count = require_int(w, path, "relation_count", cfg.world.relation_count);
    cfg.world.fact_density = require_double(w, path, "fact_density", cfg.world.fact_density);
    cfg.world.max_chain_depth = require_int(w, path, "max_chain_depth", cfg.world.max_chain_depth);
  }
  if (j.contains("questions")) {
    const nlohmann::json& q = j["questions"];
    if (!q.is_object()) throw std::runtime_error(path + ": \"questions\" must be an object");
    check_keys(q, path, "questions", {"count", "hop_distribution"});
    cfg.questions.count = require_int(q, path, "count", cfg.questions.count);
    if (q.contains("hop_distribution")) {
      const nlohmann::json& h = q["hop_distribution"];
      if (!h.is_object()) {
        throw std::runtime_error(path + ": \"hop_distribution\" must map hop counts to weights");
      }
      cfg.questions.hop_distribution.clear();
      for (const auto& item : h.items()) {
        size_t pos = 0;
        int hops = 0;
        try {
          hops = std::stoi(item.key(), &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != item.key().size() || hops < 1) {
          throw std::runtime_error(path + ": hop_distribution key \"" + item.key() +
                                   "\" is not a positive hop count");
        }
        if (!item.value().is_number()) {
          throw std::runtime_error(path + ": hop_distribution[\"" + item.key() +
                                   "\"] must be a number");
        }
        cfg.questions.hop_distribution[hops] = item.value().get<double>();
      }
    }
  }
  if (j.contains("profile")) {
    const nlohmann::json& p = j["profile"];
    if (!p.is_object()) throw std::runtime_error(path + ": \"profile\" must be an object");
    check_keys(p, path, "profile", {"coverage", "corruption_rate"});
    cfg.profile.coverage = require_double(p, path, "coverage", cfg.profile.coverage);
    cfg.profile.corruption_rate =
        require_double(p, path, "corruption_rate", cfg.profile.corruption_rate);
  }
  return cfg;
}

void run_command(const GenEnvCmd& cmd) {
  EnvFileConfig cfg = load_env_config(cmd.config_path);
  fs::create_directories(cmd.out_dir);
  World world = generate_world(cfg.world, cfg.seed);
  std::vector<Question> questions =
      generate_questions(world, cfg.questions, derive_seed(cfg.seed, "questions"));
  ParametricProfile profile = generate_profile(world, cfg.profile, derive_seed(cfg.seed, "profile"));
  save_world(join(cmd.out_dir, "world.json"), world);
  save_questions(join(cmd.out_dir, "questions.jsonl"), questions);
  save_profile(join(cmd.out_dir, "profile.json"), profile);
}

struct LoadedEnv {
  World world;
  std::vector<Question> questions;
  ParametricProfile profile;
};

LoadedEnv load_env_dir(const std::string& dir) {
  LoadedEnv env;
  env.world = load_world(join(dir, "world.json"));
  env.questions = load_questions(join(dir, "questions.jsonl"));
  env.profile = load_profile(join(dir, "profile.json"));
  return env;
}

// Relative env_dir is taken relative to the config file, so a config can
// ship next to its environment.
std::string resolve_env_dir(const std::string& config_path, const std::string& env_dir) {
  fs::path p(env_dir);
  if (p.is_absolute()) return env_dir;
  return (fs::path(config_path).parent_path() / p).string();
}

void write_run_artifacts(const std::string& out_dir, const TrainConfig& config,
                         const std::string& env_dir, const TrainResult& result) {
  fs::create_directories(out_dir);
  save_training_log(join(out_dir, "training_log.csv"), result.log);
  save_checkpoint(join(out_dir, "checkpoint.json"), result.params);
  save_boundary_log(join(out_dir, "boundary_log.jsonl"), result.boundary_log);
  nlohmann::json run;
  run["variant"] = variant_name(config.variant);
  run["seed"] = config.seed;
  run["steps"] = config.steps;
  run["stage_switch_step"] = result.stage_switch_step.has_value()
                                 ? nlohmann::json(*result.stage_switch_step)
                                 : nlohmann::json();
  run["env_dir"] = env_dir;
  run["config"] = nlohmann::json::parse(train_config_to_json(config));
  write_file_atomic(join(out_dir, "run.json"), run.dump(2) + "\n");
}

void run_command(const TrainCmd& cmd) {
  std::string env_dir;
  TrainConfig config = load_train_config(cmd.config_path, &env_dir);
  if (env_dir.empty()) {
    throw std::runtime_error(cmd.config_path +
                             ": train config needs an \"env_dir\" pointing at gen-env output");
  }
  if (cmd.seed.has_value()) config.seed = *cmd.seed;
  std::string env_path = resolve_env_dir(cmd.config_path, env_dir);
  LoadedEnv env = load_env_dir(env_path);
  TrainResult result = train_run(config, env.world, env.questions, env.profile);
  write_run_artifacts(cmd.out_dir, config, env_path, result);
}

void save_gold(const std::string& path, std::span<const EvalRecord> records) {
  std::string out;
  for (const EvalRecord& r : records) {
    nlohmann::json j;
    j["question_id"] = r.question_id;
    j["gold"] = r.gold;
    j["parametric_answerable"] = r.parametric_answerable;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

struct GoldRow {
  std::string gold;
  std::optional<bool> parametric_answerable;
};

std::unordered_map<std::string, GoldRow> load_gold(const std::string& path) {
  std::string text = read_file(path);
  std::unordered_map<std::string, GoldRow> rows;
  size_t start = 0;
  size_t line = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string raw = text.substr(start, end - start);
    start = end + 1;
    ++line;
    if (raw.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line) + ": bad json: " + e.what());
    }
    if (!j.is_object()) {
      throw std::runtime_error(path + ":" + std::to_string(line) + ": row must be an object");
    }
    check_keys(j, path, "gold row", {"question_id", "gold", "parametric_answerable"});
    if (!j.contains("question_id") || !j["question_id"].is_string() || !j.contains("gold") ||
        !j["gold"].is_string()) {
      throw std::runtime_error(path + ":" + std::to_string(line) +
                               ": row needs string \"question_id\" and \"gold\"");
    }
    GoldRow row;
    row.gold = j["gold"].get<std::string>();
    if (j.contains("parametric_answerable")) {
      if (!j["parametric_answerable"].is_boolean()) {
        throw std::runtime_error(path + ":" + std::to_string(line) +
                                 ": \"parametric_answerable\" must be a boolean");
      }
      row.parametric_answerable = j["parametric_answerable"].get<bool>();
    }
    std::string id = j["question_id"].get<std::string>();
    if (!rows.emplace(id, std::move(row)).second) {
      throw std::runtime_error(path + ":" + std::to_string(line) + ": duplicate question id \"" +
                               id + "\"");
    }
  }
  return rows;
}

void run_command(const EvalCmd& cmd) {
  PolicyParams params = load_checkpoint(cmd.checkpoint_path);
  std::vector<Question> questions = load_questions(cmd.questions_path);
  fs::path qdir = fs::path(cmd.questions_path).parent_path();
  World world = load_world((qdir / "world.json").string());
  ParametricProfile profile = load_profile((qdir / "profile.json").string());
  RolloutEnv env;
  env.world = &world;
  env.profile = &profile;
  std::vector<EvalRecord> records = evaluate_policy(
      params, questions, env, derive_seed(world.seed, "eval", static_cast<uint64_t>(params.step)));
  MetricsReport report = compute_report(records, world, profile);
  fs::create_directories(cmd.out_dir);
  save_report_json(join(cmd.out_dir, "report.json"), report);
  save_report_csv(join(cmd.out_dir, "report.csv"), report);
  std::vector<Trajectory> trajectories;
  trajectories.reserve(records.size());
  for (const EvalRecord& r : records) trajectories.push_back(r.trajectory);
  save_transcripts(join(cmd.out_dir, "transcripts.jsonl"), trajectories);
  save_gold(join(cmd.out_dir, "gold.jsonl"), records);
  // copies so the eval directory is a self-contained audit input
  save_world(join(cmd.out_dir, "world.json"), world);
  save_profile(join(cmd.out_dir, "profile.json"), profile);
}

void run_command(const AuditCmd& cmd) {
  std::vector<TranscriptRecord> transcripts = load_transcripts(cmd.transcripts_path);
  std::unordered_map<std::string, GoldRow> gold = load_gold(cmd.gold_path);
  std::vector<EvalRecord> records;
  records.reserve(transcripts.size());
  for (const TranscriptRecord& tr : transcripts) {
    auto it = gold.find(tr.trajectory.question_id);
    if (it == gold.end()) {
      throw std::runtime_error(cmd.gold_path + ": no gold row for question \"" +
                               tr.trajectory.question_id + "\"");
    }
    EvalRecord rec;
    rec.question_id = tr.trajectory.question_id;
    rec.trajectory = tr.trajectory;
    rec.gold = it->second.gold;
    if (it->second.parametric_answerable.has_value()) {
      rec.parametric_answerable = *it->second.parametric_answerable;
    } else {
      // empirical fallback: a no-search trajectory that is already correct
      // demonstrates the question was answerable from internal knowledge
      rec.parametric_answerable =
          search_count(tr.trajectory) == 0 && judge_trajectory(tr.trajectory, rec.gold);
    }
    rec.redundant_annotation = tr.redundant_search_indices;
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::runtime_error(cmd.transcripts_path + ": no transcripts to audit");

  fs::path gdir = fs::path(cmd.gold_path).parent_path();
  std::string world_path = (gdir / "world.json").string();
  std::string profile_path = (gdir / "profile.json").string();
  MetricsReport report;
  if (fs::exists(world_path) && fs::exists(profile_path)) {
    World world = load_world(world_path);
    ParametricProfile profile = load_profile(profile_path);
    report = compute_report(records, world, profile);
  } else {
    std::string missing;
    int extra = 0;
    for (const EvalRecord& r : records) {
      if (r.redundant_annotation.has_value() || search_count(r.trajectory) == 0) continue;
      if (missing.size() > 120) {
        ++extra;
        continue;
      }
      if (!missing.empty()) missing += ", ";
      missing += r.question_id;
    }
    if (extra > 0) missing += " and " + std::to_string(extra) + " more";
    if (!missing.empty()) {
      throw std::runtime_error(
          "audit: no world.json/profile.json next to the gold file, so searched transcripts need "
          "redundant_search_indices: " +
          missing);
    }
    report.acc = compute_acc(records);
    report.sc = compute_sc(records);
    report.qor = compute_qor(records);
    long total = 0;
    long redundant = 0;
    for (const EvalRecord& r : records) {
      total += search_count(r.trajectory);
      if (r.redundant_annotation.has_value()) redundant += annotation_redundant_count(r);
      if (r.parametric_answerable) ++report.counts.para_questions;
    }
    report.counts.questions = static_cast<int>(records.size());
    report.counts.total_searches = static_cast<int>(total);
    report.counts.redundant_searches = static_cast<int>(redundant);
    if (total > 0) report.sor = static_cast<double>(redundant) / static_cast<double>(total);
  }
  fs::create_directories(cmd.out_dir);
  save_report_json(join(cmd.out_dir, "report.json"), report);
  save_report_csv(join(cmd.out_dir, "report.csv"), report);
}

void run_command(const AblateCmd& cmd) {
  if (cmd.variants.empty()) throw std::runtime_error("ablate: no variants given");
  if (cmd.seeds.empty()) throw std::runtime_error("ablate: no seeds given");
  {
    std::unordered_set<std::string> seen;
    for (const std::string& name : cmd.variants) {
      if (!seen.insert(name).second) {
        throw std::runtime_error("ablate: duplicate variant \"" + name + "\"");
      }
    }
    std::unordered_set<uint64_t> seed_seen;
    for (uint64_t s : cmd.seeds) {
      if (!seed_seen.insert(s).second) {
        throw std::runtime_error("ablate: duplicate seed " + std::to_string(s));
      }
    }
  }
  std::string env_dir;
  TrainConfig base = load_train_config(cmd.config_path, &env_dir);
  if (env_dir.empty()) {
    throw std::runtime_error(cmd.config_path +
                             ": train config needs an \"env_dir\" pointing at gen-env output");
  }
  std::vector<Variant> variants;
  variants.reserve(cmd.variants.size());
  for (const std::string& name : cmd.variants) variants.push_back(parse_variant(name));
  std::string env_path = resolve_env_dir(cmd.config_path, env_dir);
  LoadedEnv env = load_env_dir(env_path);
  fs::create_directories(cmd.out_dir);

  struct CellResult {
    std::string variant;
    uint64_t seed = 0;
    double acc = 0.0;
    double sc = 0.0;
    double f1 = 0.0;
    std::optional<int> switch_step;
  };
  std::vector<CellResult> cells;
  for (size_t vi = 0; vi < variants.size(); ++vi) {
    for (uint64_t seed : cmd.seeds) {
      TrainConfig config = base;
      config.variant = variants[vi];
      config.seed = seed;
      TrainResult result = train_run(config, env.world, env.questions, env.profile);
      std::string cell_dir = join(cmd.out_dir, cmd.variants[vi] + "_s" + std::to_string(seed));
      write_run_artifacts(cell_dir, config, env_path, result);

      auto [train_qs, val_qs] = split_questions(env.questions, config.val_fraction);
      std::span<const Question> eval_qs =
          val_qs.empty() ? std::span<const Question>(env.questions)
                         : std::span<const Question>(val_qs);
      RolloutEnv rollout_env;
      rollout_env.world = &env.world;
      rollout_env.profile = &env.profile;
      rollout_env.retrieve_k = config.retrieve_k;
      rollout_env.p_miss = config.p_miss;
      rollout_env.search_cap = config.search_cap;
      std::vector<EvalRecord> records = evaluate_policy(
          result.params, eval_qs, rollout_env, derive_seed(seed, "final_eval"), config.workers);
      cells.push_back({cmd.variants[vi], seed, compute_acc(records), compute_sc(records),
                       mean_answer_f1(records), result.stage_switch_step});
    }
  }

  std::string cells_csv = csv_row({"variant", "seed", "acc", "sc", "f1", "stage_switch_step"});
  for (const CellResult& c : cells) {
    cells_csv += csv_row({c.variant, std::to_string(c.seed), fmt_double(c.acc), fmt_double(c.sc),
                          fmt_double(c.f1),
                          c.switch_step.has_value() ? std::to_string(*c.switch_step) : ""});
  }
  write_file_atomic(join(cmd.out_dir, "ablation_cells.csv"), cells_csv);

  std::string summary_csv = csv_row({"variant", "acc", "sc", "f1"});
  for (const std::string& name : cmd.variants) {
    double acc = 0.0;
    double sc = 0.0;
    double f1 = 0.0;
    int n = 0;
    for (const CellResult& c : cells) {
      if (c.variant != name) continue;
      acc += c.acc;
      sc += c.sc;
      f1 += c.f1;
      ++n;
    }
    summary_csv += csv_row({name, fmt_double(acc / n), fmt_double(sc / n), fmt_double(f1 / n)});
  }
  write_file_atomic(join(cmd.out_dir, "ablation_summary.csv"), summary_csv);
}

void run_command(const ReportCmd& cmd) {
  if (!fs::exists(cmd.log_dir) || !fs::is_directory(cmd.log_dir)) {
    throw std::runtime_error(cmd.log_dir + ": not a directory");
  }
  std::vector<fs::path> log_paths;
  for (const auto& entry : fs::recursive_directory_iterator(cmd.log_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "training_log.csv") {
      log_paths.push_back(entry.path());
    }
  }
  std::sort(log_paths.begin(), log_paths.end());
  if (log_paths.empty()) throw std::runtime_error("no training logs under " + cmd.log_dir);

  struct Row {
    std::string variant;
    uint64_t seed = 0;
    StepRecord rec;
  };
  std::vector<Row> rows;
  for (const fs::path& log_path : log_paths) {
    fs::path run_path = log_path.parent_path() / "run.json";
    if (!fs::exists(run_path)) {
      throw std::runtime_error(log_path.string() +
                               ": missing sibling run.json with variant and seed");
    }
    nlohmann::json run;
    try {
      run = nlohmann::json::parse(read_file(run_path.string()));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(run_path.string() + ": bad json: " + e.what());
    }
    if (!run.is_object() || !run.contains("variant") || !run["variant"].is_string() ||
        !run.contains("seed") || !run["seed"].is_number()) {
      throw std::runtime_error(run_path.string() + ": needs \"variant\" and \"seed\"");
    }
    std::string variant = run["variant"].get<std::string>();
    uint64_t seed = run["seed"].get<uint64_t>();
    for (const StepRecord& rec : load_training_log(log_path.string())) {
      rows.push_back({variant, seed, rec});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.rec.step < b.rec.step;
  });
  std::string out = csv_row({"variant", "seed", "step", "stage", "f1", "sc", "no_search_ratio",
                             "redundant_search_ratio"});
  for (const Row& r : rows) {
    out += csv_row({r.variant, std::to_string(r.seed), std::to_string(r.rec.step),
                    std::to_string(r.rec.stage), fmt_double(r.rec.mean_f1),
                    fmt_double(r.rec.mean_sc), fmt_double(r.rec.no_search_ratio),
                    r.rec.redundant_search_ratio.has_value()
                        ? fmt_double(*r.rec.redundant_search_ratio)
                        : ""});
  }
  write_file_atomic(cmd.out_path, out);
}

}  // namespace

void execute(const Command& command) {
  std::visit([](const auto& cmd) { run_command(cmd); }, command);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"search-boundary training laboratory"};
  app.require_subcommand(1);

  GenEnvCmd gen_env;
  CLI::App* gen = app.add_subcommand("gen-env", "generate world, questions, and knowledge profile");
  gen->add_option("--config", gen_env.config_path, "environment config json")->required();
  gen->add_option("--out", gen_env.out_dir, "output directory")->required();

  TrainCmd train;
  uint64_t train_seed = 0;
  CLI::App* tr = app.add_subcommand("train", "run one training configuration");
  tr->add_option("--config", train.config_path, "train config json")->required();
  CLI::Option* seed_opt = tr->add_option("--seed", train_seed, "master seed override");
  tr->add_option("--out", train.out_dir, "output directory")->required();

  EvalCmd eval;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a question set");
  ev->add_option("--checkpoint", eval.checkpoint_path, "checkpoint json")->required();
  ev->add_option("--questions", eval.questions_path,
                 "questions jsonl; world.json and profile.json must sit next to it")
      ->required();
  ev->add_option("--out", eval.out_dir, "output directory")->required();

  AuditCmd audit;
  CLI::App* au = app.add_subcommand("audit", "recompute metrics from saved transcripts");
  au->add_option("--transcripts", audit.transcripts_path, "transcripts jsonl")->required();
  au->add_option("--gold", audit.gold_path, "gold answers jsonl")->required();
  au->add_option("--out", audit.out_dir, "output directory")->required();

  AblateCmd ablate;
  CLI::App* ab = app.add_subcommand("ablate", "sweep variants x seeds and compare finals");
  ab->add_option("--config", ablate.config_path, "train config json")->required();
  ab->add_option("--variants", ablate.variants, "comma-separated variant names")
      ->required()
      ->delimiter(',');
  ab->add_option("--seeds", ablate.seeds, "comma-separated master seeds")
      ->required()
      ->delimiter(',');
  ab->add_option("--out", ablate.out_dir, "output directory")->required();

  ReportCmd report;
  CLI::App* re = app.add_subcommand("report", "aggregate training logs into one csv");
  re->add_option("log_dir", report.log_dir, "directory tree containing run outputs")->required();
  re->add_option("--out", report.out_path, "summary csv path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << std::endl;
    return 2;
  }

  Command command;
  if (gen->parsed()) {
    command = gen_env;
  } else if (tr->parsed()) {
    if (seed_opt->count() > 0) train.seed = train_seed;
    command = train;
  } else if (ev->parsed()) {
    command = eval;
  } else if (au->parsed()) {
    command = audit;
  } else if (ab->parsed()) {
    command = ablate;
  } else {
    command = report;
  }

  try {
    execute(command);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace searchbound
