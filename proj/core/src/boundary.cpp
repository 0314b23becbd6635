#include "searchbound/boundary.hpp"

#include <stdexcept>

#include <json.hpp>

#include "searchbound/io.hpp"
#include "searchbound/reward.hpp"

namespace searchbound {

using nlohmann::json;

std::string boundary_label_name(BoundaryLabel label) {
  switch (label) {
    case BoundaryLabel::NoSearch: return "no_search";
    case BoundaryLabel::NeedSearch: return "need_search";
    case BoundaryLabel::Undetermined: return "undetermined";
  }
  return "?";
}

BoundaryLabel parse_boundary_label(const std::string& name) {
  if (name == "no_search") return BoundaryLabel::NoSearch;
  if (name == "need_search") return BoundaryLabel::NeedSearch;
  if (name == "undetermined") return BoundaryLabel::Undetermined;
  throw std::runtime_error("unknown boundary label '" + name + "'");
}

Judge make_f1_judge(std::string gold) {
  return [gold = std::move(gold)](const Trajectory& t) {
    return judge_trajectory(t, gold);
  };
}

std::pair<int, int> count_successes(const RolloutGroups& groups, const Judge& judge) {
  if (groups.disabled.empty() || groups.enabled.empty()) {
    throw std::invalid_argument("both rollout groups must be non-empty");
  }
  for (const Trajectory& t : groups.disabled) {
    if (t.mode != Mode::SearchDisabled) {
      throw std::invalid_argument("search-enabled trajectory in the disabled group");
    }
  }
  for (const Trajectory& t : groups.enabled) {
    if (t.mode != Mode::SearchEnabled) {
      throw std::invalid_argument("search-disabled trajectory in the enabled group");
    }
  }
  int n_d = 0, n_e = 0;
  for (const Trajectory& t : groups.disabled) n_d += judge(t) ? 1 : 0;
  for (const Trajectory& t : groups.enabled) n_e += judge(t) ? 1 : 0;
  return {n_d, n_e};
}

BoundaryLabel classify(int n_d, int n_e, int delta) {
  if (delta < 1) throw std::invalid_argument("delta must be >= 1");
  if (n_d < 0 || n_e < 0) throw std::invalid_argument("success counts must be >= 0");
  if (n_d >= delta) return BoundaryLabel::NoSearch;
  if (n_d == 0 && n_e > 0) return BoundaryLabel::NeedSearch;
  return BoundaryLabel::Undetermined;
}

std::optional<int> min_sufficient_searches(std::span<const Trajectory> enabled,
                                           const Judge& judge) {
  std::optional<int> best;
  for (const Trajectory& t : enabled) {
    if (!judge(t)) continue;
    const int n = search_count(t);
    if (!best || n < *best) best = n;
  }
  return best;
}

BoundaryVerdict evaluate_boundary(const RolloutGroups& groups, const Judge& judge, int delta) {
  BoundaryVerdict v;
  auto [n_d, n_e] = count_successes(groups, judge);
  v.n_d = n_d;
  v.n_e = n_e;
  v.delta = delta;
  v.label = classify(n_d, n_e, delta);
  v.n_min = min_sufficient_searches(groups.enabled, judge);
  return v;
}

void save_boundary_log(const std::string& path, std::span<const BoundaryLogEntry> entries) {
  std::string out;
  for (const BoundaryLogEntry& e : entries) {
    json j{{"step", e.step},
           {"question_id", e.question_id},
           {"n_d", e.verdict.n_d},
           {"n_e", e.verdict.n_e},
           {"delta", e.verdict.delta},
           {"label", boundary_label_name(e.verdict.label)}};
    if (e.verdict.n_min) {
      j["n_min"] = *e.verdict.n_min;
    } else {
      j["n_min"] = nullptr;
    }
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<BoundaryLogEntry> load_boundary_log(const std::string& path) {
  std::vector<BoundaryLogEntry> entries;
  const std::string content = read_file(path);
  size_t start = 0, line_no = 0;
  while (start < content.size()) {
    size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("boundary log line " + std::to_string(line_no) + ": " + e.what());
    }
    BoundaryLogEntry e;
    e.step = j.at("step").get<int>();
    e.question_id = j.at("question_id").get<std::string>();
    e.verdict.n_d = j.at("n_d").get<int>();
    e.verdict.n_e = j.at("n_e").get<int>();
    e.verdict.delta = j.at("delta").get<int>();
    e.verdict.label = parse_boundary_label(j.at("label").get<std::string>());
    if (!j.at("n_min").is_null()) e.verdict.n_min = j.at("n_min").get<int>();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace searchbound
