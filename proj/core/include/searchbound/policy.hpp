#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "searchbound/boundary.hpp"
#include "searchbound/env.hpp"
#include "searchbound/rng.hpp"
#include "searchbound/trajectory.hpp"

namespace searchbound {

inline constexpr int kFeatureCount = 5;
inline constexpr int kActionCount = 3;

enum class Action { SearchNext = 0, SearchRedundant = 1, AnswerNow = 2 };

extern const std::array<const char*, kFeatureCount> kFeatureNames;
extern const std::array<const char*, kActionCount> kActionNames;

// Index of the "all_hops_resolved" feature in FeatureVec / kFeatureNames.
inline constexpr int kAllResolvedFeature = 3;

using FeatureVec = std::array<double, kFeatureCount>;
using ActionMask = std::array<bool, kActionCount>;
using ActionDist = std::array<double, kActionCount>;

// Linear softmax policy; weights laid out feature-major, matching the
// checkpoint file: w[feature * kActionCount + action].
struct PolicyParams {
  std::array<double, kFeatureCount * kActionCount> w{};
  int step = 0;

  double& at(int feature, int action) { return w[feature * kActionCount + action]; }
  double at(int feature, int action) const { return w[feature * kActionCount + action]; }
};

void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

// How each hop's answer is currently backed: gold evidence, parametric
// knowledge (possibly corrupt, indistinguishable to the agent), or nothing.
enum class HopSource { Unresolved, Evidence, Parametric };

struct AgentState {
  const Question* question = nullptr;
  Mode mode = Mode::SearchEnabled;
  int search_cap = 5;
  int searches_used = 0;
  std::vector<HopSource> hop_sources;
  std::vector<EvidenceItem> evidence;
};

inline constexpr const char* kThinkPlaceholder = "...";
inline constexpr const char* kNoAnswerPlaceholder = "unknown";

AgentState make_initial_state(const Question& q, const ParametricProfile& profile, Mode mode,
                              int search_cap);

FeatureVec state_features(const AgentState& state);

// Search actions are legal only in enabled mode below the cap; AnswerNow is
// always legal. Hitting the cap therefore truncates the rollout to AnswerNow.
ActionMask legal_actions(const AgentState& state);

ActionDist action_distribution(const PolicyParams& params, const FeatureVec& features,
                               const ActionMask& legal);

Action sample_action(const ActionDist& dist, Rng& rng);

struct Decision {
  FeatureVec features{};
  ActionMask legal{};
  Action action = Action::AnswerNow;
};

// A trajectory plus the decision trace needed to recompute its action
// probabilities during optimization.
struct SampledTrajectory {
  Trajectory trajectory;
  std::vector<Decision> decisions;
};

struct RolloutEnv {
  const World* world = nullptr;
  const ParametricProfile* profile = nullptr;
  int retrieve_k = 3;
  double p_miss = 0.0;
  int search_cap = 5;
};

SampledTrajectory rollout(const PolicyParams& params, const Question& q, Mode mode,
                          const RolloutEnv& env, uint64_t seed);

struct SampledGroups {
  std::vector<SampledTrajectory> disabled;
  std::vector<SampledTrajectory> enabled;
  RolloutGroups trajectories() const;
};

// Per-rollout seed streams are derived from (master seed, question id, group
// tag, rollout index, step tag), so results never depend on scheduling.
SampledGroups rollout_group(const PolicyParams& params, const Question& q,
                            const RolloutEnv& env, int n_disabled, int n_enabled,
                            uint64_t master_seed, uint64_t step_tag);

}  // namespace searchbound
