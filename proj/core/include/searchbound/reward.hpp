#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "searchbound/boundary.hpp"
#include "searchbound/trajectory.hpp"

namespace searchbound {

// Extractive-QA answer normalization: lowercase, strip punctuation, drop
// articles (a/an/the), collapse whitespace.
std::string normalize_answer(std::string_view text);

// Token-level F1 over normalized token multisets. Both empty -> 1, exactly
// one empty -> 0.
double accuracy_f1(std::string_view answer, std::string_view gold);

// True iff accuracy_f1 == 1 under the shared normalization. The same
// predicate drives boundary success counts, the reward gate, and ACC.
bool judge_answer(const std::string& answer, const std::string& gold);
bool judge_trajectory(const Trajectory& t, const std::string& gold);

inline constexpr double kGateTolerance = 1e-12;

enum class Stage { StageI = 1, StageII = 2 };

struct RewardConfig {
  double alpha = 0.05;
  Stage stage = Stage::StageI;
};

struct RewardBreakdown {
  double r_acc = 0.0;
  double r_search = 0.0;  // always <= 0
  bool gated = false;     // whether r_search entered the total
  double total = 0.0;
};

// Label-conditioned search penalty:
//   NoSearch     -> -alpha * n_searches
//   NeedSearch   -> -alpha * max(0, n_searches - n_min)
//   Undetermined -> 0
double search_reward(BoundaryLabel label, int n_searches, std::optional<int> n_min,
                     double alpha);

// Stage I: accuracy only. Stage II: accuracy plus the search penalty, gated
// on a fully correct answer.
RewardBreakdown total_reward(const Trajectory& t, const std::string& gold,
                             const BoundaryVerdict& verdict, const RewardConfig& config);

// Ablation rule: r_acc - alpha * n_searches unconditionally, no gate, no
// boundary labels.
RewardBreakdown fixed_penalty_reward(const Trajectory& t, const std::string& gold,
                                     double alpha);

}  // namespace searchbound
