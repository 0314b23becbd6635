#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "searchbound/boundary.hpp"
#include "searchbound/trajectory.hpp"

using namespace searchbound;
namespace fs = std::filesystem;

namespace {

Trajectory make_traj(Mode mode, int searches, std::optional<std::string> answer) {
  Trajectory t;
  t.mode = mode;
  for (int i = 0; i < searches; ++i) {
    t.steps.push_back({StepKind::Search, "e0|r0"});
    t.steps.push_back({StepKind::Information, ""});
  }
  t.steps.push_back({StepKind::Think, "..."});
  if (answer.has_value()) {
    t.steps.push_back({StepKind::Answer, *answer});
    t.predicted_answer = *answer;
  }
  return t;
}

// Literal transcription of the three-case labeling rule.
BoundaryLabel label_oracle(int n_d, int n_e, int delta) {
  if (n_d >= delta) return BoundaryLabel::NoSearch;
  if (n_d == 0 && n_e > 0) return BoundaryLabel::NeedSearch;
  return BoundaryLabel::Undetermined;
}

}  // namespace

TEST_CASE("classify matches the literal rule on the full sweep") {
  for (int n_d = 0; n_d <= 4; ++n_d) {
    for (int n_e = 0; n_e <= 4; ++n_e) {
      for (int delta = 1; delta <= 4; ++delta) {
        CAPTURE(n_d);
        CAPTURE(n_e);
        CAPTURE(delta);
        CHECK(classify(n_d, n_e, delta) == label_oracle(n_d, n_e, delta));
      }
    }
  }
}

TEST_CASE("classify spot values") {
  CHECK(classify(2, 3, 2) == BoundaryLabel::NoSearch);
  CHECK(classify(0, 1, 2) == BoundaryLabel::NeedSearch);
  CHECK(classify(1, 4, 2) == BoundaryLabel::Undetermined);
  CHECK(classify(0, 0, 2) == BoundaryLabel::Undetermined);
  CHECK_THROWS_AS(classify(1, 1, 0), std::invalid_argument);
}

TEST_CASE("raising delta never promotes a label to NoSearch") {
  for (int n_d = 0; n_d <= 4; ++n_d) {
    for (int n_e = 0; n_e <= 4; ++n_e) {
      for (int delta = 1; delta < 4; ++delta) {
        if (classify(n_d, n_e, delta + 1) == BoundaryLabel::NoSearch) {
          CHECK(classify(n_d, n_e, delta) == BoundaryLabel::NoSearch);
        }
      }
    }
  }
}

TEST_CASE("count_successes tallies judged answers per group") {
  const std::string gold = "Beijing";
  RolloutGroups groups;
  groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, gold));
  groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, gold));
  groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, "Shanghai"));
  groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, std::nullopt));
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 2, gold));
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 1, "wrong"));

  Judge judge = make_f1_judge(gold);
  auto [n_d, n_e] = count_successes(groups, judge);
  CHECK(n_d == 2);
  CHECK(n_e == 1);

  // brute-force re-judge
  int check_d = 0;
  for (const Trajectory& t : groups.disabled) {
    check_d += (t.predicted_answer && *t.predicted_answer == gold) ? 1 : 0;
  }
  CHECK(n_d == check_d);
}

TEST_CASE("count_successes rejects empty or mode-mismatched groups") {
  Judge judge = make_f1_judge("x");
  RolloutGroups empty_side;
  empty_side.enabled.push_back(make_traj(Mode::SearchEnabled, 0, "x"));
  CHECK_THROWS_AS(count_successes(empty_side, judge), std::invalid_argument);

  RolloutGroups mismatched;
  mismatched.disabled.push_back(make_traj(Mode::SearchEnabled, 0, "x"));
  mismatched.enabled.push_back(make_traj(Mode::SearchEnabled, 0, "x"));
  CHECK_THROWS_AS(count_successes(mismatched, judge), std::invalid_argument);
}

TEST_CASE("min_sufficient_searches equals the exhaustive minimum for all small groups") {
  const std::string gold = "g";
  // every ordered tuple of 4 rollouts, each (correct?, searches in 0..5)
  for (int code = 0; code < 12 * 12 * 12 * 12; ++code) {
    int c = code;
    std::vector<Trajectory> enabled;
    std::optional<int> expected;
    for (int slot = 0; slot < 4; ++slot) {
      int v = c % 12;
      c /= 12;
      bool correct = v >= 6;
      int searches = v % 6;
      enabled.push_back(make_traj(Mode::SearchEnabled, searches,
                                  correct ? gold : std::string("bad")));
      if (correct && (!expected || searches < *expected)) expected = searches;
    }
    auto got = min_sufficient_searches(enabled, make_f1_judge(gold));
    CHECK(got == expected);
  }
}

TEST_CASE("min_sufficient_searches spot values") {
  const std::string gold = "g";
  std::vector<Trajectory> enabled = {make_traj(Mode::SearchEnabled, 3, gold),
                                     make_traj(Mode::SearchEnabled, 1, gold),
                                     make_traj(Mode::SearchEnabled, 2, gold)};
  CHECK(min_sufficient_searches(enabled, make_f1_judge(gold)) == 1);
  std::vector<Trajectory> none = {make_traj(Mode::SearchEnabled, 2, "bad")};
  CHECK_FALSE(min_sufficient_searches(none, make_f1_judge(gold)).has_value());
  std::vector<Trajectory> single = {make_traj(Mode::SearchEnabled, 2, gold)};
  CHECK(min_sufficient_searches(single, make_f1_judge(gold)) == 2);
}

TEST_CASE("evaluate_boundary assembles a consistent verdict") {
  const std::string gold = "g";
  RolloutGroups groups;
  for (int i = 0; i < 4; ++i) {
    groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, "bad"));
  }
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 2, gold));
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 3, gold));
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 1, "bad"));
  groups.enabled.push_back(make_traj(Mode::SearchEnabled, 0, "bad"));

  BoundaryVerdict v = evaluate_boundary(groups, make_f1_judge(gold), 2);
  CHECK(v.n_d == 0);
  CHECK(v.n_e == 2);
  CHECK(v.delta == 2);
  CHECK(v.label == BoundaryLabel::NeedSearch);
  REQUIRE(v.n_min.has_value());
  CHECK(*v.n_min == 2);
  CHECK(v.label == classify(v.n_d, v.n_e, v.delta));
}

TEST_CASE("NeedSearch verdicts always carry n_min") {
  const std::string gold = "g";
  for (int correct_enabled = 1; correct_enabled <= 4; ++correct_enabled) {
    RolloutGroups groups;
    for (int i = 0; i < 4; ++i) {
      groups.disabled.push_back(make_traj(Mode::SearchDisabled, 0, "bad"));
    }
    for (int i = 0; i < 4; ++i) {
      bool correct = i < correct_enabled;
      groups.enabled.push_back(make_traj(Mode::SearchEnabled, i + 1, correct ? gold : "bad"));
    }
    BoundaryVerdict v = evaluate_boundary(groups, make_f1_judge(gold), 2);
    REQUIRE(v.label == BoundaryLabel::NeedSearch);
    CHECK(v.n_min.has_value());
  }
}

TEST_CASE("boundary log survives a save/load round trip") {
  fs::path dir = fs::temp_directory_path() / "sb_boundary_log";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "boundary_log.jsonl").string();

  std::vector<BoundaryLogEntry> entries;
  entries.push_back({0, "q00001", {3, 4, 2, BoundaryLabel::NoSearch, 1}});
  entries.push_back({1, "q00002", {0, 2, 2, BoundaryLabel::NeedSearch, 2}});
  entries.push_back({2, "q00003", {1, 0, 2, BoundaryLabel::Undetermined, std::nullopt}});
  save_boundary_log(path, entries);
  auto back = load_boundary_log(path);
  REQUIRE(back.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(back[i].step == entries[i].step);
    CHECK(back[i].question_id == entries[i].question_id);
    CHECK(back[i].verdict.n_d == entries[i].verdict.n_d);
    CHECK(back[i].verdict.n_e == entries[i].verdict.n_e);
    CHECK(back[i].verdict.delta == entries[i].verdict.delta);
    CHECK(back[i].verdict.label == entries[i].verdict.label);
    CHECK(back[i].verdict.n_min == entries[i].verdict.n_min);
  }
  fs::remove_all(dir);
}
