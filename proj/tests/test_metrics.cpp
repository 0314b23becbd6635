#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "searchbound/env.hpp"
#include "searchbound/io.hpp"
#include "searchbound/metrics.hpp"
#include "searchbound/reward.hpp"
#include "searchbound/rng.hpp"
#include "searchbound/trajectory.hpp"

using namespace searchbound;
namespace fs = std::filesystem;

namespace {

Trajectory answer_only(const std::string& answer, Mode mode = Mode::SearchEnabled) {
  Trajectory t;
  t.mode = mode;
  t.steps.push_back({StepKind::Answer, answer});
  t.predicted_answer = answer;
  return t;
}

// Structured search block: query serialized, evidence from a real retrieval.
void add_search(Trajectory& t, const World& w, const SearchQuery& q, uint64_t seed) {
  t.steps.push_back({StepKind::Search, encode_query(q)});
  t.steps.push_back({StepKind::Information, encode_evidence(retrieve(w, q, 3, {0.0}, seed))});
}

EvalRecord simple_record(const std::string& id, int searches, bool correct,
                         bool parametric_answerable,
                         std::optional<std::vector<int>> annotation = std::nullopt) {
  Trajectory t;
  t.mode = Mode::SearchEnabled;
  t.question_id = id;
  for (int i = 0; i < searches; ++i) {
    t.steps.push_back({StepKind::Search, "free text " + std::to_string(i)});
    t.steps.push_back({StepKind::Information, "free text"});
  }
  std::string answer = correct ? "gold" : "wrong";
  t.steps.push_back({StepKind::Answer, answer});
  t.predicted_answer = answer;
  EvalRecord r;
  r.question_id = id;
  r.trajectory = std::move(t);
  r.gold = "gold";
  r.parametric_answerable = parametric_answerable;
  r.redundant_annotation = std::move(annotation);
  return r;
}

}  // namespace

TEST_CASE("parametric_answerable requires every hop KnownCorrect") {
  Question q;
  q.hops = {{"e0", "r0"}, {"e1", "r1"}};
  ParametricProfile p;
  p.entries[pair_key("e0", "r0")] = {FactStatus::KnownCorrect, "e1"};
  CHECK_FALSE(parametric_answerable(q, p));
  p.entries[pair_key("e1", "r1")] = {FactStatus::KnownCorrupt, "e9"};
  CHECK_FALSE(parametric_answerable(q, p));
  p.entries[pair_key("e1", "r1")] = {FactStatus::KnownCorrect, "e2"};
  CHECK(parametric_answerable(q, p));
  Question empty;
  CHECK_FALSE(parametric_answerable(empty, p));
}

TEST_CASE("compute_acc and compute_sc over simple records") {
  std::vector<EvalRecord> records;
  records.push_back(simple_record("q1", 0, true, false));
  records.push_back(simple_record("q2", 1, true, false, {{}}));
  records.push_back(simple_record("q3", 2, true, false, {{}}));
  records.push_back(simple_record("q4", 0, false, false));
  CHECK(compute_acc(records) == 0.75);
  CHECK(compute_sc(records) == 0.75);

  std::vector<EvalRecord> all;
  all.push_back(simple_record("q1", 0, true, false));
  all.push_back(simple_record("q2", 1, true, false, {{}}));
  all.push_back(simple_record("q3", 2, true, false, {{}}));
  CHECK(compute_acc(all) == 1.0);
  CHECK(compute_sc(all) == 1.0);

  CHECK_THROWS_AS(compute_acc({}), std::invalid_argument);
  CHECK_THROWS_AS(compute_sc({}), std::invalid_argument);
}

TEST_CASE("compute_qor over parametric-answerable records") {
  std::vector<EvalRecord> records;
  records.push_back(simple_record("q1", 1, true, true, {{}}));
  records.push_back(simple_record("q2", 2, false, true, {{}}));
  records.push_back(simple_record("q3", 1, true, true, {{}}));
  records.push_back(simple_record("q4", 0, true, true));
  records.push_back(simple_record("q5", 3, true, false, {{}}));  // not answerable, ignored
  auto qor = compute_qor(records);
  REQUIRE(qor.has_value());
  CHECK(*qor == 0.75);

  std::vector<EvalRecord> none;
  none.push_back(simple_record("q1", 2, true, false, {{}}));
  CHECK_FALSE(compute_qor(none).has_value());

  std::vector<EvalRecord> quiet;
  quiet.push_back(simple_record("q1", 0, true, true));
  quiet.push_back(simple_record("q2", 0, false, true));
  CHECK(compute_qor(quiet) == 0.0);
}

TEST_CASE("annotated records give sor without any replay") {
  World w;  // never consulted when annotations are present
  ParametricProfile p;
  std::vector<EvalRecord> records;
  for (int i = 0; i < 5; ++i) {
    std::vector<int> ann;
    if (i == 0) ann = {0, 1};  // 2 redundant searches among the 10 total
    records.push_back(simple_record("q" + std::to_string(i), 2, true, false, ann));
  }
  auto sor = compute_sor(records, w, p);
  REQUIRE(sor.has_value());
  CHECK(*sor == 0.2);

  std::vector<EvalRecord> no_searches;
  no_searches.push_back(simple_record("q1", 0, true, false));
  CHECK_FALSE(compute_sor(no_searches, w, p).has_value());
}

TEST_CASE("annotation indices are validated") {
  EvalRecord bad = simple_record("q1", 2, true, false, {{0, 2}});
  CHECK_THROWS_AS(annotation_redundant_count(bad), std::invalid_argument);
  EvalRecord dup = simple_record("q1", 2, true, false, {{1, 1}});
  CHECK_THROWS_AS(annotation_redundant_count(dup), std::invalid_argument);
  EvalRecord ok = simple_record("q1", 2, true, false, {{0, 1}});
  CHECK(annotation_redundant_count(ok) == 2);
}

TEST_CASE("replay flags a repeated query as redundant") {
  World w;
  w.entities = {"e0", "e1", "e2"};
  w.relations = {"r0"};
  w.facts = {{"e0", "r0", "e1"}};
  w.build_index();
  ParametricProfile p;

  Trajectory t;
  t.mode = Mode::SearchEnabled;
  t.question_id = "q1";
  add_search(t, w, {"e0", "r0"}, 1);
  add_search(t, w, {"e0", "r0"}, 2);  // same hop again
  t.steps.push_back({StepKind::Answer, "e1"});
  t.predicted_answer = "e1";

  auto redundant = replay_redundant_searches(t, w, p);
  CHECK(redundant == std::vector<int>{1});
}

TEST_CASE("replay flags searches over hops the profile already knows") {
  World w;
  w.entities = {"e0", "e1", "e2"};
  w.relations = {"r0", "r1"};
  // distinct subject and relation, so neither retrieval drags the other fact
  // in as a distractor
  w.facts = {{"e0", "r0", "e1"}, {"e2", "r1", "e0"}};
  w.build_index();
  ParametricProfile p;
  p.entries[pair_key("e0", "r0")] = {FactStatus::KnownCorrect, "e1"};

  Trajectory t;
  t.mode = Mode::SearchEnabled;
  t.question_id = "q1";
  add_search(t, w, {"e0", "r0"}, 3);  // KnownCorrect -> verification is redundant
  add_search(t, w, {"e2", "r1"}, 4);  // fresh hop
  t.steps.push_back({StepKind::Answer, "e1"});
  t.predicted_answer = "e1";

  CHECK(replay_redundant_searches(t, w, p) == std::vector<int>{0});

  // a corrupt entry is not "known correct": verifying it is useful, not redundant
  p.entries[pair_key("e0", "r0")] = {FactStatus::KnownCorrupt, "e2"};
  CHECK(replay_redundant_searches(t, w, p).empty());
}

TEST_CASE("unstructured searched trajectories need an annotation") {
  World w;
  w.entities = {"e0"};
  w.relations = {"r0"};
  w.build_index();
  ParametricProfile p;
  std::vector<EvalRecord> records;
  records.push_back(simple_record("q7", 1, true, false));  // free-text query, no annotation
  try {
    compute_sor(records, w, p);
    FAIL("expected an error for unannotated free-text searches");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("q7") != std::string::npos);
    CHECK(msg.find("step") != std::string::npos);
  }
}

TEST_CASE("metrics equal a brute-force recount on 100 random records") {
  WorldConfig wc;
  World w = generate_world(wc, 42);
  ParametricProfile p = generate_profile(w, {0.6, 0.15}, 7);
  QuestionConfig qc;
  qc.count = 100;
  auto questions = generate_questions(w, qc, 5);

  Rng rng(2025);
  std::vector<EvalRecord> records;
  for (const Question& q : questions) {
    Trajectory t;
    t.mode = Mode::SearchEnabled;
    t.question_id = q.id;
    int searches = static_cast<int>(rng.index(4));
    for (int s = 0; s < searches; ++s) {
      // mix: question hops (sometimes repeated) and random world pairs
      SearchQuery query;
      if (rng.bernoulli(0.6)) {
        const QuestionHop& hop = q.hops[rng.index(q.hops.size())];
        query = {hop.entity, hop.relation};
      } else {
        query = {w.entities[rng.index(w.entities.size())],
                 w.relations[rng.index(w.relations.size())]};
      }
      add_search(t, w, query, rng.next_u64());
    }
    std::string answer = rng.bernoulli(0.5) ? q.gold : "wrong";
    t.steps.push_back({StepKind::Answer, answer});
    t.predicted_answer = answer;
    records.push_back(make_eval_record(q, t, p));
  }

  MetricsReport report = compute_report(records, w, p);

  // independent naive recount, straight from the definitions
  int correct = 0;
  int total_searches = 0;
  int redundant = 0;
  int para = 0;
  int para_searched = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& r = records[i];
    if (r.trajectory.predicted_answer && judge_answer(*r.trajectory.predicted_answer, r.gold)) {
      ++correct;
    }
    bool answerable = true;
    for (const QuestionHop& hop : questions[i].hops) {
      if (profile_status(p, {hop.entity, hop.relation}) != FactStatus::KnownCorrect) {
        answerable = false;
      }
    }
    CHECK(answerable == r.parametric_answerable);
    if (answerable) {
      ++para;
      if (search_count(r.trajectory) > 0) ++para_searched;
    }
    std::vector<Fact> seen;
    for (size_t si = 0; si < r.trajectory.steps.size(); ++si) {
      const Step& step = r.trajectory.steps[si];
      if (step.kind == StepKind::Search) {
        ++total_searches;
        SearchQuery query = *decode_query(step.content);
        const Fact* gold = w.find_fact(query.entity, query.relation);
        bool in_evidence = false;
        for (const Fact& f : seen) {
          if (gold && f == *gold) in_evidence = true;
        }
        if (in_evidence || profile_status(p, query) == FactStatus::KnownCorrect) ++redundant;
      } else if (step.kind == StepKind::Information) {
        auto facts = decode_evidence(step.content);
        for (const Fact& f : *facts) seen.push_back(f);
      }
    }
  }
  CHECK(report.acc == double(correct) / records.size());
  CHECK(report.sc == double(total_searches) / records.size());
  REQUIRE(report.qor.has_value());
  CHECK(*report.qor == double(para_searched) / para);
  REQUIRE(report.sor.has_value());
  CHECK(*report.sor == double(redundant) / total_searches);
  CHECK(report.counts.questions == 100);
  CHECK(report.counts.para_questions == para);
  CHECK(report.counts.total_searches == total_searches);
  CHECK(report.counts.redundant_searches == redundant);
}

TEST_CASE("a quiet correct parametric record never raises QOR or lowers ACC") {
  std::vector<EvalRecord> records;
  records.push_back(simple_record("q1", 2, false, true, {{0}}));
  records.push_back(simple_record("q2", 0, true, false));
  double acc_before = compute_acc(records);
  double qor_before = compute_qor(records).value();

  records.push_back(simple_record("q3", 0, true, true));
  CHECK(compute_acc(records) >= acc_before);
  CHECK(compute_qor(records).value() <= qor_before);
}

TEST_CASE("dynamics ratios cover the degenerate batches") {
  World w;
  w.entities = {"e0", "e1"};
  w.relations = {"r0"};
  w.facts = {{"e0", "r0", "e1"}};
  w.build_index();
  ParametricProfile p;

  std::vector<Trajectory> all_search;
  for (int i = 0; i < 3; ++i) {
    Trajectory t;
    t.mode = Mode::SearchEnabled;
    add_search(t, w, {"e0", "r0"}, i);
    t.steps.push_back({StepKind::Answer, "e1"});
    t.predicted_answer = "e1";
    all_search.push_back(std::move(t));
  }
  DynamicsStats busy = compute_dynamics(all_search, w, p);
  CHECK(busy.no_search_ratio == 0.0);
  REQUIRE(busy.redundant_search_ratio.has_value());

  std::vector<Trajectory> quiet = {answer_only("x"), answer_only("y")};
  DynamicsStats idle = compute_dynamics(quiet, w, p);
  CHECK(idle.no_search_ratio == 1.0);
  CHECK_FALSE(idle.redundant_search_ratio.has_value());

  // disabled-mode trajectories are not part of the enabled-group dynamics
  std::vector<Trajectory> mixed = {answer_only("x", Mode::SearchDisabled)};
  mixed.push_back(all_search[0]);
  DynamicsStats only_enabled = compute_dynamics(mixed, w, p);
  CHECK(only_enabled.no_search_ratio == 0.0);
}

TEST_CASE("reports round trip through json and csv") {
  fs::path dir = fs::temp_directory_path() / "sb_metrics_report";
  fs::remove_all(dir);
  fs::create_directories(dir);

  MetricsReport report;
  report.acc = 0.675;
  report.sc = 1.95;
  report.qor = 0.5454545454545454;
  report.sor = std::nullopt;
  report.counts = {40, 11, 78, 0};
  std::string jpath = (dir / "report.json").string();
  save_report_json(jpath, report);
  MetricsReport back = load_report_json(jpath);
  CHECK(back.acc == report.acc);
  CHECK(back.sc == report.sc);
  CHECK(back.qor == report.qor);
  CHECK_FALSE(back.sor.has_value());
  CHECK(back.counts.questions == 40);
  CHECK(back.counts.redundant_searches == 0);

  std::string cpath = (dir / "report.csv").string();
  save_report_csv(cpath, report);
  std::string csv = read_file(cpath);
  CHECK(csv.find("acc,sc,qor,sor,") == 0);
  CHECK(csv.find("0.675") != std::string::npos);
  fs::remove_all(dir);
}
