#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "searchbound/trajectory.hpp"

namespace searchbound {

// Contrasted rollout groups for one question: G_d sampled with search
// disabled, G_e with search enabled.
struct RolloutGroups {
  std::vector<Trajectory> disabled;
  std::vector<Trajectory> enabled;
};

enum class BoundaryLabel { NoSearch, NeedSearch, Undetermined };

std::string boundary_label_name(BoundaryLabel label);
BoundaryLabel parse_boundary_label(const std::string& name);

struct BoundaryVerdict {
  int n_d = 0;
  int n_e = 0;
  int delta = 1;
  BoundaryLabel label = BoundaryLabel::Undetermined;
  std::optional<int> n_min;  // fewest searches among correct enabled rollouts
};

using Judge = std::function<bool(const Trajectory&)>;

// Correctness judge shared by boundary estimation, the reward gate, and ACC.
Judge make_f1_judge(std::string gold);

// (n_d, n_e): successes in the disabled and enabled groups.
std::pair<int, int> count_successes(const RolloutGroups& groups, const Judge& judge);

// NoSearch iff n_d >= delta; NeedSearch iff n_d == 0 and n_e > 0; otherwise
// Undetermined. Cases checked in that order.
BoundaryLabel classify(int n_d, int n_e, int delta);

std::optional<int> min_sufficient_searches(std::span<const Trajectory> enabled,
                                           const Judge& judge);

BoundaryVerdict evaluate_boundary(const RolloutGroups& groups, const Judge& judge, int delta);

struct BoundaryLogEntry {
  int step = 0;
  std::string question_id;
  BoundaryVerdict verdict;
};

void save_boundary_log(const std::string& path, std::span<const BoundaryLogEntry> entries);
std::vector<BoundaryLogEntry> load_boundary_log(const std::string& path);

}  // namespace searchbound
