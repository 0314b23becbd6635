#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "searchbound/boundary.hpp"
#include "searchbound/env.hpp"
#include "searchbound/metrics.hpp"
#include "searchbound/policy.hpp"
#include "searchbound/reward.hpp"

namespace searchbound {

// Training variants:
//   StageWise      accuracy-only warmup, then the gated search penalty once
//                  validation F1 plateaus (or at stage_switch_step)
//   OutcomeOnly    accuracy-only forever
//   FixedPenalty   r_acc - alpha * searches from step 0, no gate, no labels
//   GatedFromStart gated rule from step 0, labels re-estimated every step
//   FrozenBoundary gated rule from step 0, labels estimated once at step 0
enum class Variant { StageWise, OutcomeOnly, FixedPenalty, GatedFromStart, FrozenBoundary };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct PlateauConfig {
  int patience = 5;
  double min_delta = 0.005;
};

struct TrainConfig {
  int steps = 300;
  int questions_per_step = 16;
  double lr = 0.25;
  double clip_ratio = 0.2;
  double kl_coeff = 0.001;
  double alpha = 0.05;
  int delta = 2;
  int n_disabled = 4;
  int n_enabled = 4;
  int search_cap = 5;
  int retrieve_k = 3;
  double p_miss = 0.05;
  PlateauConfig plateau;
  // Steps per validation round. A round scores as the mean val_f1 of its
  // steps and the plateau history advances once per round; single steps are
  // too noisy for min_delta to mean anything.
  int val_every = 10;
  // Rollouts per validation question per step. Averaging keeps plateau
  // detection from being reset by rollout noise spikes.
  int val_rollouts = 8;
  // Initial weight steering all-hops-resolved states toward answering. The
  // untrained policy trusts its own knowledge; training has to discover that
  // verification pays.
  double init_answer_bias = 2.75;
  // When set (StageWise only), switch stages at this step instead of waiting
  // for the validation plateau.
  std::optional<int> stage_switch_step;
  Variant variant = Variant::StageWise;
  uint64_t seed = 1;
  double val_fraction = 0.2;  // held-out tail of the question list
  bool include_disabled_in_update = true;
  int workers = 1;
};

void validate_config(const TrainConfig& config);

// JSON run config; keys match the TrainConfig field names (plateau fields are
// flat: "patience", "min_delta"). Unknown keys are an error. An optional
// "env_dir" key is reported through env_dir when the caller wants it.
TrainConfig load_train_config(const std::string& path, std::string* env_dir = nullptr);
std::string train_config_to_json(const TrainConfig& config);

// (r - mean) / (population std + 1e-8); all zeros for a zero-variance group.
// Called per group, never on a concatenation of groups.
std::vector<double> normalize_group_advantages(std::span<const double> rewards);

struct DecisionItem {
  FeatureVec features{};
  ActionMask legal{};
  Action action = Action::AnswerNow;
  double advantage = 0.0;
};

using GradVec = std::array<double, kFeatureCount * kActionCount>;

// Mean over decisions of min(rho * A, clip(rho, 1 - eps, 1 + eps) * A) minus
// kl_coeff times the mean KL(params || old_params) at the visited states.
double surrogate_objective(const PolicyParams& params, const PolicyParams& old_params,
                           std::span<const DecisionItem> batch, double clip_ratio,
                           double kl_coeff);
GradVec surrogate_gradient(const PolicyParams& params, const PolicyParams& old_params,
                           std::span<const DecisionItem> batch, double clip_ratio,
                           double kl_coeff);

struct WeightedSample {
  SampledTrajectory sample;
  double advantage = 0.0;
};

struct UpdateStats {
  double mean_ratio = 1.0;   // vs old_params, after the step
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
  int decisions = 0;
};

struct UpdateResult {
  PolicyParams params;
  UpdateStats stats;
};

// One gradient ascent step on the surrogate. Throws with diagnostics instead
// of applying a non-finite update.
UpdateResult update_policy(const PolicyParams& params, std::span<const WeightedSample> batch,
                           const PolicyParams& old_params, double lr, double clip_ratio,
                           double kl_coeff);

// True iff each of the last `patience` entries improves on the running best
// of everything before it by less than min_delta.
bool detect_plateau(std::span<const double> history, int patience, double min_delta);

// Validation split = last floor(val_fraction * n) questions.
std::pair<std::vector<Question>, std::vector<Question>> split_questions(
    std::span<const Question> questions, double val_fraction);

struct StepRecord {
  int step = 0;
  int stage = 1;
  double mean_f1 = 0.0;   // enabled-group rollouts of this step
  double mean_sc = 0.0;
  double no_search_ratio = 0.0;
  std::optional<double> redundant_search_ratio;  // absent when nothing searched
  int label_no_search = 0;
  int label_need_search = 0;
  int label_undetermined = 0;
  double val_f1 = 0.0;  // post-update validation score; 0 with no val split
};

void save_training_log(const std::string& path, std::span<const StepRecord> log);
std::vector<StepRecord> load_training_log(const std::string& path);

struct TrainResult {
  std::vector<StepRecord> log;
  PolicyParams params;
  std::optional<int> stage_switch_step;  // first step that ran in stage II
  std::vector<BoundaryLogEntry> boundary_log;
};

TrainResult train_run(const TrainConfig& config, const World& world,
                      std::span<const Question> questions, const ParametricProfile& profile);

// One enabled rollout per question against a fixed parameter snapshot.
std::vector<EvalRecord> evaluate_policy(const PolicyParams& params,
                                        std::span<const Question> questions,
                                        const RolloutEnv& env, uint64_t seed, int workers = 1);

double mean_answer_f1(std::span<const EvalRecord> records);

}  // namespace searchbound
