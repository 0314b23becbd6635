#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "searchbound/env.hpp"
#include "searchbound/optimizer.hpp"
#include "searchbound/policy.hpp"
#include "searchbound/reward.hpp"
#include "searchbound/rng.hpp"
#include "searchbound/trajectory.hpp"

using namespace searchbound;

namespace {

struct Fixture {
  World world;
  ParametricProfile profile;
  std::vector<Question> questions;
  RolloutEnv env;
};

const Fixture& fixture() {
  static Fixture f = [] {
    Fixture x;
    x.world = generate_world(WorldConfig{}, 42);
    x.profile = generate_profile(x.world, {0.6, 0.15}, derive_seed(42, "profile"));
    QuestionConfig qc;
    qc.count = 64;
    x.questions = generate_questions(x.world, qc, derive_seed(42, "questions"));
    x.env = {&x.world, &x.profile, 3, 0.05, 5};
    return x;
  }();
  return f;
}

}  // namespace

static void BM_parse_transcript(benchmark::State& state) {
  Trajectory t;
  t.mode = Mode::SearchEnabled;
  for (int i = 0; i < 4; ++i) {
    t.steps.push_back({StepKind::Think, "weighing hop " + std::to_string(i)});
    t.steps.push_back({StepKind::Search, "e" + std::to_string(i) + "|r1"});
    t.steps.push_back({StepKind::Information, "e1|r1|e2;e3|r1|e4;e5|r1|e6"});
  }
  t.steps.push_back({StepKind::Answer, "e9"});
  t.predicted_answer = "e9";
  std::string text = render_transcript(t);
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_transcript(text, Mode::SearchEnabled));
  }
  state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(text.size()));
}
BENCHMARK(BM_parse_transcript);

static void BM_accuracy_f1(benchmark::State& state) {
  std::string a = "The warehouse DISTRICT, near an old harbor line.";
  std::string b = "warehouse district near the old harbor line";
  for (auto _ : state) {
    benchmark::DoNotOptimize(accuracy_f1(a, b));
  }
}
BENCHMARK(BM_accuracy_f1);

static void BM_rollout(benchmark::State& state) {
  const Fixture& f = fixture();
  PolicyParams params;
  uint64_t i = 0;
  for (auto _ : state) {
    const Question& q = f.questions[i % f.questions.size()];
    benchmark::DoNotOptimize(rollout(params, q, Mode::SearchEnabled, f.env, i));
    ++i;
  }
}
BENCHMARK(BM_rollout);

static void BM_rollout_group(benchmark::State& state) {
  const Fixture& f = fixture();
  PolicyParams params;
  uint64_t i = 0;
  for (auto _ : state) {
    const Question& q = f.questions[i % f.questions.size()];
    benchmark::DoNotOptimize(rollout_group(params, q, f.env, 4, 4, 7, i));
    ++i;
  }
}
BENCHMARK(BM_rollout_group);

static void BM_normalize_group(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> rewards(8);
  for (double& r : rewards) r = rng.next_double();
  for (auto _ : state) {
    benchmark::DoNotOptimize(normalize_group_advantages(rewards));
  }
}
BENCHMARK(BM_normalize_group);

static void BM_update_policy(benchmark::State& state) {
  const Fixture& f = fixture();
  PolicyParams params;
  std::vector<WeightedSample> batch;
  for (int i = 0; i < 32; ++i) {
    SampledTrajectory s =
        rollout(params, f.questions[i % f.questions.size()], Mode::SearchEnabled, f.env, i);
    batch.push_back({std::move(s), (i % 2 == 0) ? 0.5 : -0.5});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(update_policy(params, batch, params, 0.05, 0.2, 0.001));
  }
}
BENCHMARK(BM_update_policy);

BENCHMARK_MAIN();
