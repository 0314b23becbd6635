#include "searchbound/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "searchbound/io.hpp"
#include "searchbound/reward.hpp"

namespace searchbound {

bool parametric_answerable(const Question& q, const ParametricProfile& profile) {
  for (const QuestionHop& hop : q.hops) {
    if (profile_status(profile, {hop.entity, hop.relation}) != FactStatus::KnownCorrect) {
      return false;
    }
  }
  return !q.hops.empty();
}

EvalRecord make_eval_record(const Question& q, const Trajectory& trajectory,
                            const ParametricProfile& profile) {
  EvalRecord record;
  record.question_id = q.id;
  record.trajectory = trajectory;
  record.gold = q.gold;
  record.parametric_answerable = parametric_answerable(q, profile);
  return record;
}

double compute_acc(std::span<const EvalRecord> records) {
  if (records.empty()) throw std::invalid_argument("compute_acc: no records");
  int correct = 0;
  for (const EvalRecord& r : records) {
    if (judge_trajectory(r.trajectory, r.gold)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double compute_sc(std::span<const EvalRecord> records) {
  if (records.empty()) throw std::invalid_argument("compute_sc: no records");
  long total = 0;
  for (const EvalRecord& r : records) total += search_count(r.trajectory);
  return static_cast<double>(total) / static_cast<double>(records.size());
}

std::optional<double> compute_qor(std::span<const EvalRecord> records) {
  int para = 0;
  int searched = 0;
  for (const EvalRecord& r : records) {
    if (!r.parametric_answerable) continue;
    ++para;
    if (search_count(r.trajectory) >= 1) ++searched;
  }
  if (para == 0) return std::nullopt;
  return static_cast<double>(searched) / static_cast<double>(para);
}

std::vector<int> replay_redundant_searches(const Trajectory& t, const World& world,
                                           const ParametricProfile& profile) {
  std::vector<int> redundant;
  std::vector<Fact> evidence;
  std::string offenders;
  int search_index = -1;
  for (size_t i = 0; i < t.steps.size(); ++i) {
    const Step& step = t.steps[i];
    if (step.kind == StepKind::Search) {
      ++search_index;
      std::optional<SearchQuery> query = decode_query(step.content);
      if (!query) {
        offenders += (offenders.empty() ? "" : ", ") + std::string("step ") + std::to_string(i) +
                     " (search)";
        continue;
      }
      const Fact* gold = world.find_fact(query->entity, query->relation);
      bool in_evidence =
          gold != nullptr && std::find(evidence.begin(), evidence.end(), *gold) != evidence.end();
      bool known_correct = profile_status(profile, *query) == FactStatus::KnownCorrect;
      if (in_evidence || known_correct) redundant.push_back(search_index);
    } else if (step.kind == StepKind::Information) {
      std::optional<std::vector<Fact>> facts = decode_evidence(step.content);
      if (!facts) {
        offenders += (offenders.empty() ? "" : ", ") + std::string("step ") + std::to_string(i) +
                     " (information)";
        continue;
      }
      evidence.insert(evidence.end(), facts->begin(), facts->end());
    }
  }
  if (!offenders.empty()) {
    throw std::invalid_argument("trajectory " + t.question_id +
                                " has unstructured content, cannot replay redundancy: " +
                                offenders + "; supply redundant_search_indices instead");
  }
  return redundant;
}

int annotation_redundant_count(const EvalRecord& r) {
  int searches = search_count(r.trajectory);
  std::unordered_set<int> seen;
  for (int idx : *r.redundant_annotation) {
    if (idx < 0 || idx >= searches) {
      throw std::invalid_argument("record " + r.question_id + ": redundant annotation index " +
                                  std::to_string(idx) + " outside [0, " +
                                  std::to_string(searches) + ")");
    }
    if (!seen.insert(idx).second) {
      throw std::invalid_argument("record " + r.question_id +
                                  ": duplicate redundant annotation index " + std::to_string(idx));
    }
  }
  return static_cast<int>(seen.size());
}

std::optional<double> compute_sor(std::span<const EvalRecord> records, const World& world,
                                  const ParametricProfile& profile) {
  long total = 0;
  long redundant = 0;
  for (const EvalRecord& r : records) {
    total += search_count(r.trajectory);
    if (r.redundant_annotation.has_value()) {
      redundant += annotation_redundant_count(r);
    } else {
      redundant += static_cast<long>(replay_redundant_searches(r.trajectory, world, profile).size());
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(redundant) / static_cast<double>(total);
}

DynamicsStats compute_dynamics(std::span<const Trajectory> trajectories, const World& world,
                               const ParametricProfile& profile) {
  DynamicsStats stats;
  int enabled = 0;
  int no_search = 0;
  long total = 0;
  long redundant = 0;
  for (const Trajectory& t : trajectories) {
    if (t.mode != Mode::SearchEnabled) continue;
    ++enabled;
    int n = search_count(t);
    if (n == 0) ++no_search;
    total += n;
    redundant += static_cast<long>(replay_redundant_searches(t, world, profile).size());
  }
  if (enabled > 0) stats.no_search_ratio = static_cast<double>(no_search) / enabled;
  if (total > 0) stats.redundant_search_ratio = static_cast<double>(redundant) / total;
  return stats;
}

MetricsReport compute_report(std::span<const EvalRecord> records, const World& world,
                             const ParametricProfile& profile) {
  MetricsReport report;
  report.acc = compute_acc(records);
  report.sc = compute_sc(records);
  report.qor = compute_qor(records);
  report.sor = compute_sor(records, world, profile);
  report.counts.questions = static_cast<int>(records.size());
  long total = 0;
  long redundant = 0;
  for (const EvalRecord& r : records) {
    if (r.parametric_answerable) ++report.counts.para_questions;
    total += search_count(r.trajectory);
    if (r.redundant_annotation.has_value()) {
      redundant += annotation_redundant_count(r);
    } else {
      redundant += static_cast<long>(replay_redundant_searches(r.trajectory, world, profile).size());
    }
  }
  report.counts.total_searches = static_cast<int>(total);
  report.counts.redundant_searches = static_cast<int>(redundant);
  return report;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  if (!v.has_value()) return nullptr;
  return *v;
}

}  // namespace

void save_report_json(const std::string& path, const MetricsReport& report) {
  nlohmann::json j;
  j["acc"] = report.acc;
  j["sc"] = report.sc;
  j["qor"] = optional_json(report.qor);
  j["sor"] = optional_json(report.sor);
  j["counts"] = {{"questions", report.counts.questions},
                 {"para_questions", report.counts.para_questions},
                 {"total_searches", report.counts.total_searches},
                 {"redundant_searches", report.counts.redundant_searches}};
  write_file_atomic(path, j.dump(2) + "\n");
}

void save_report_csv(const std::string& path, const MetricsReport& report) {
  std::string out = csv_row({"acc", "sc", "qor", "sor", "questions", "para_questions",
                             "total_searches", "redundant_searches"});
  out += csv_row({fmt_double(report.acc), fmt_double(report.sc),
                  report.qor ? fmt_double(*report.qor) : "",
                  report.sor ? fmt_double(*report.sor) : "",
                  std::to_string(report.counts.questions),
                  std::to_string(report.counts.para_questions),
                  std::to_string(report.counts.total_searches),
                  std::to_string(report.counts.redundant_searches)});
  write_file_atomic(path, out);
}

MetricsReport load_report_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad report json: " + e.what());
  }
  MetricsReport report;
  try {
    report.acc = j.at("acc").get<double>();
    report.sc = j.at("sc").get<double>();
    if (!j.at("qor").is_null()) report.qor = j.at("qor").get<double>();
    if (!j.at("sor").is_null()) report.sor = j.at("sor").get<double>();
    const nlohmann::json& counts = j.at("counts");
    report.counts.questions = counts.at("questions").get<int>();
    report.counts.para_questions = counts.at("para_questions").get<int>();
    report.counts.total_searches = counts.at("total_searches").get<int>();
    report.counts.redundant_searches = counts.at("redundant_searches").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": report field error: " + e.what());
  }
  return report;
}

}  // namespace searchbound
