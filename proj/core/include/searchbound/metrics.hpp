#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "searchbound/env.hpp"
#include "searchbound/trajectory.hpp"

namespace searchbound {

struct EvalRecord {
  std::string question_id;
  Trajectory trajectory;
  std::string gold;
  bool parametric_answerable = false;
  // Audit annotation: indices among the trajectory's Search steps judged
  // redundant externally. When present it overrides the replay oracle.
  std::optional<std::vector<int>> redundant_annotation;
};

// True when every hop of the question is KnownCorrect in the profile, i.e.
// the question is answerable without any search.
bool parametric_answerable(const Question& q, const ParametricProfile& profile);

EvalRecord make_eval_record(const Question& q, const Trajectory& trajectory,
                            const ParametricProfile& profile);

// Fraction of records whose predicted answer the shared judge accepts.
double compute_acc(std::span<const EvalRecord> records);

// Mean search count per trajectory.
double compute_sc(std::span<const EvalRecord> records);

// Over parametric-answerable records, the fraction that searched anyway.
// Absent when no record is parametric-answerable.
std::optional<double> compute_qor(std::span<const EvalRecord> records);

// Replays a structured trajectory against the world and profile; returns the
// indices (among its Search steps, in order) of redundant searches. A search
// is redundant iff its query's gold fact already sits in evidence from
// earlier steps, or the queried pair is KnownCorrect in the profile.
// Throws listing the offending steps when content is not structured.
std::vector<int> replay_redundant_searches(const Trajectory& t, const World& world,
                                           const ParametricProfile& profile);

// Count of annotated redundant searches, validating that indices are unique
// and within the trajectory's search count.
int annotation_redundant_count(const EvalRecord& record);

// Redundant searches / total searches; absent when nothing searched.
// Uses redundant_annotation where present, the replay oracle otherwise.
std::optional<double> compute_sor(std::span<const EvalRecord> records, const World& world,
                                  const ParametricProfile& profile);

struct DynamicsStats {
  double no_search_ratio = 0.0;  // 0 when there are no enabled trajectories
  std::optional<double> redundant_search_ratio;
};

// Training-dynamics ratios over the enabled-mode trajectories in the span.
DynamicsStats compute_dynamics(std::span<const Trajectory> trajectories, const World& world,
                               const ParametricProfile& profile);

struct MetricsCounts {
  int questions = 0;
  int para_questions = 0;
  int total_searches = 0;
  int redundant_searches = 0;
};

struct MetricsReport {
  double acc = 0.0;
  double sc = 0.0;
  std::optional<double> qor;
  std::optional<double> sor;
  MetricsCounts counts;
};

MetricsReport compute_report(std::span<const EvalRecord> records, const World& world,
                             const ParametricProfile& profile);

void save_report_json(const std::string& path, const MetricsReport& report);
void save_report_csv(const std::string& path, const MetricsReport& report);
MetricsReport load_report_json(const std::string& path);

}  // namespace searchbound
