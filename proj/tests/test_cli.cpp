#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "searchbound/cli.hpp"
#include "searchbound/env.hpp"
#include "searchbound/io.hpp"
#include "searchbound/optimizer.hpp"
#include "searchbound/policy.hpp"

using namespace searchbound;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<std::string> args) {
  std::vector<std::string> store = {"searchbound"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(store.size());
  for (const std::string& s : store) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

bool tree_has_partial_files(const fs::path& root) {
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().filename().string().find(".partial") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("full pipeline: gen-env, train, eval, audit, report, ablate") {
  fs::path root = fresh_dir("sb_cli_pipeline");
  std::string env_cfg = (root / "env.json").string();
  std::string env_dir = (root / "env").string();
  write_file_atomic(env_cfg, R"({
    "seed": 21,
    "world": {"entity_count": 40, "relation_count": 10, "fact_density": 0.3,
              "max_chain_depth": 3},
    "questions": {"count": 30, "hop_distribution": {"1": 0.5, "2": 0.3, "3": 0.2}},
    "profile": {"coverage": 0.6, "corruption_rate": 0.15}
  })");
  REQUIRE(cli({"gen-env", "--config", env_cfg, "--out", env_dir}) == 0);
  CHECK(fs::exists(root / "env/world.json"));
  CHECK(fs::exists(root / "env/questions.jsonl"));
  CHECK(fs::exists(root / "env/profile.json"));
  World world = load_world((root / "env/world.json").string());
  CHECK(world.entities.size() == 40);
  CHECK(load_questions((root / "env/questions.jsonl").string()).size() == 30);

  std::string train_cfg = (root / "train.json").string();
  write_file_atomic(train_cfg, R"({
    "steps": 5, "questions_per_step": 4, "n_disabled": 2, "n_enabled": 2,
    "search_cap": 3, "val_fraction": 0.2, "variant": "stagewise",
    "stage_switch_step": 2, "seed": 3, "env_dir": "env"
  })");
  std::string run1 = (root / "runs/run1").string();
  REQUIRE(cli({"train", "--config", train_cfg, "--out", run1}) == 0);
  CHECK(fs::exists(fs::path(run1) / "training_log.csv"));
  CHECK(fs::exists(fs::path(run1) / "checkpoint.json"));
  CHECK(fs::exists(fs::path(run1) / "boundary_log.jsonl"));
  CHECK(fs::exists(fs::path(run1) / "run.json"));

  PolicyParams params = load_checkpoint((fs::path(run1) / "checkpoint.json").string());
  CHECK(params.step == 5);
  std::vector<StepRecord> log = load_training_log((fs::path(run1) / "training_log.csv").string());
  REQUIRE(log.size() == 5);
  CHECK(log[0].stage == 1);
  CHECK(log[4].stage == 2);

  std::string run_meta = read_file((fs::path(run1) / "run.json").string());
  CHECK(run_meta.find("\"variant\": \"stagewise\"") != std::string::npos);
  CHECK(run_meta.find("\"stage_switch_step\": 2") != std::string::npos);

  // a rerun of the same config is byte-identical
  std::string run1b = (root / "dup/run1b").string();
  REQUIRE(cli({"train", "--config", train_cfg, "--out", run1b}) == 0);
  CHECK(read_file((fs::path(run1) / "training_log.csv").string()) ==
        read_file((fs::path(run1b) / "training_log.csv").string()));
  CHECK(read_file((fs::path(run1) / "checkpoint.json").string()) ==
        read_file((fs::path(run1b) / "checkpoint.json").string()));

  // --seed overrides the config seed and changes the run
  std::string run2 = (root / "runs/run2").string();
  REQUIRE(cli({"train", "--config", train_cfg, "--seed", "4", "--out", run2}) == 0);
  CHECK(read_file((fs::path(run2) / "run.json").string()).find("\"seed\": 4") !=
        std::string::npos);

  std::string eval1 = (root / "eval1").string();
  REQUIRE(cli({"eval", "--checkpoint", run1 + "/checkpoint.json", "--questions",
               env_dir + "/questions.jsonl", "--out", eval1}) == 0);
  for (const char* name : {"report.json", "report.csv", "transcripts.jsonl", "gold.jsonl",
                           "world.json", "profile.json"}) {
    CHECK(fs::exists(fs::path(eval1) / name));
  }

  // audit of the eval directory reproduces the eval report byte for byte
  std::string audit1 = (root / "audit1").string();
  REQUIRE(cli({"audit", "--transcripts", eval1 + "/transcripts.jsonl", "--gold",
               eval1 + "/gold.jsonl", "--out", audit1}) == 0);
  CHECK(read_file(eval1 + "/report.json") == read_file(audit1 + "/report.json"));
  CHECK(read_file(eval1 + "/report.csv") == read_file(audit1 + "/report.csv"));

  std::string summary = (root / "summary.csv").string();
  REQUIRE(cli({"report", (root / "runs").string(), "--out", summary}) == 0);
  std::string report_csv = read_file(summary);
  CHECK(report_csv.find("variant,seed,step,stage,f1,sc,no_search_ratio,redundant_search_ratio\n") ==
        0);
  CHECK(count_lines(report_csv) == 11);  // header + 2 runs x 5 steps
  CHECK(report_csv.find("\nstagewise,3,0,1,") != std::string::npos);
  CHECK(report_csv.find("\nstagewise,4,0,1,") != std::string::npos);

  std::string ab = (root / "ablate").string();
  REQUIRE(cli({"ablate", "--config", train_cfg, "--variants", "outcome_only,fixed_penalty",
               "--seeds", "1,2", "--out", ab}) == 0);
  CHECK(fs::exists(fs::path(ab) / "outcome_only_s1/training_log.csv"));
  CHECK(fs::exists(fs::path(ab) / "outcome_only_s2/run.json"));
  CHECK(fs::exists(fs::path(ab) / "fixed_penalty_s1/checkpoint.json"));
  std::string cells = read_file((fs::path(ab) / "ablation_cells.csv").string());
  CHECK(cells.find("variant,seed,acc,sc,f1,stage_switch_step\n") == 0);
  CHECK(count_lines(cells) == 5);
  std::string ab_summary = read_file((fs::path(ab) / "ablation_summary.csv").string());
  CHECK(ab_summary.find("variant,acc,sc,f1\n") == 0);
  CHECK(count_lines(ab_summary) == 3);
  CHECK(ab_summary.find("outcome_only,") < ab_summary.find("fixed_penalty,"));

  CHECK_FALSE(tree_has_partial_files(root));
  fs::remove_all(root);
}

TEST_CASE("usage errors exit 2, execution errors exit 1, help exits 0") {
  fs::path root = fresh_dir("sb_cli_codes");
  CHECK(cli({}) == 2);                              // a subcommand is required
  CHECK(cli({"bogus"}) == 2);                       // unknown subcommand
  CHECK(cli({"train", "--config"}) == 2);           // flag without a value
  CHECK(cli({"train", "--out", "x"}) == 2);         // missing required --config
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"train", "--help"}) == 0);

  std::string out = (root / "out").string();
  CHECK(cli({"train", "--config", (root / "missing.json").string(), "--out", out}) == 1);

  std::string bad_cfg = (root / "bad.json").string();
  write_file_atomic(bad_cfg, "{not json");
  CHECK(cli({"gen-env", "--config", bad_cfg, "--out", out}) == 1);
  write_file_atomic(bad_cfg, R"({"wrld": {}})");
  CHECK(cli({"gen-env", "--config", bad_cfg, "--out", out}) == 1);
  fs::remove_all(root);
}

TEST_CASE("eval needs world.json and profile.json next to the questions") {
  fs::path root = fresh_dir("sb_cli_eval_missing");
  std::string env_cfg = (root / "env.json").string();
  write_file_atomic(env_cfg, R"({"seed": 5, "world": {"entity_count": 20, "relation_count": 6},
                                 "questions": {"count": 8}})");
  REQUIRE(cli({"gen-env", "--config", env_cfg, "--out", (root / "env").string()}) == 0);
  fs::create_directories(root / "bare");
  fs::copy_file(root / "env/questions.jsonl", root / "bare/questions.jsonl");
  PolicyParams params;
  save_checkpoint((root / "ckpt.json").string(), params);
  CHECK(cli({"eval", "--checkpoint", (root / "ckpt.json").string(), "--questions",
             (root / "bare/questions.jsonl").string(), "--out", (root / "out").string()}) == 1);
  fs::remove_all(root);
}

TEST_CASE("audit without replay inputs demands annotations") {
  fs::path root = fresh_dir("sb_cli_audit_bare");
  // one searched transcript, no world/profile siblings, no annotation: error
  write_file_atomic((root / "transcripts.jsonl").string(),
                    R"({"question_id": "q1", "mode": "enabled", "transcript": )"
                    R"("<search>e0|r0</search><information>e0|r0|e1</information>)"
                    R"(<answer>e1</answer>"})"
                    "\n");
  write_file_atomic((root / "gold.jsonl").string(),
                    R"({"question_id": "q1", "gold": "e1", "parametric_answerable": false})"
                    "\n");
  CHECK(cli({"audit", "--transcripts", (root / "transcripts.jsonl").string(), "--gold",
             (root / "gold.jsonl").string(), "--out", (root / "out").string()}) == 1);

  // with the annotation present the audit succeeds and reports SOR from it
  write_file_atomic((root / "transcripts.jsonl").string(),
                    R"({"question_id": "q1", "mode": "enabled", "transcript": )"
                    R"("<search>e0|r0</search><information>e0|r0|e1</information>)"
                    R"(<answer>e1</answer>", "redundant_search_indices": [0]})"
                    "\n");
  REQUIRE(cli({"audit", "--transcripts", (root / "transcripts.jsonl").string(), "--gold",
               (root / "gold.jsonl").string(), "--out", (root / "out").string()}) == 0);
  std::string report = read_file((root / "out/report.csv").string());
  CHECK(report.find("\n1,1,") != std::string::npos);  // acc 1, sc 1
  CHECK(count_lines(report) == 2);
  fs::remove_all(root);
}

TEST_CASE("ablate rejects duplicate and unknown cells") {
  fs::path root = fresh_dir("sb_cli_ablate_bad");
  std::string cfg = (root / "train.json").string();
  write_file_atomic(cfg, R"({"steps": 2, "env_dir": "env"})");
  std::string out = (root / "out").string();
  CHECK(cli({"ablate", "--config", cfg, "--variants", "outcome_only,outcome_only", "--seeds",
             "1", "--out", out}) == 1);
  CHECK(cli({"ablate", "--config", cfg, "--variants", "outcome_only", "--seeds", "1,1", "--out",
             out}) == 1);
  CHECK(cli({"ablate", "--config", cfg, "--variants", "nonsense", "--seeds", "1", "--out",
             out}) == 1);
  fs::remove_all(root);
}

TEST_CASE("report needs at least one training log with run metadata") {
  fs::path root = fresh_dir("sb_cli_report_bad");
  CHECK(cli({"report", (root / "nowhere").string(), "--out", (root / "s.csv").string()}) == 1);
  fs::create_directories(root / "empty");
  CHECK(cli({"report", (root / "empty").string(), "--out", (root / "s.csv").string()}) == 1);

  // a log without its run.json sidecar is an error, not a silent skip
  fs::create_directories(root / "runs/r1");
  save_training_log((root / "runs/r1/training_log.csv").string(), {});
  CHECK(cli({"report", (root / "runs").string(), "--out", (root / "s.csv").string()}) == 1);
  fs::remove_all(root);
}
