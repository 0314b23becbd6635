#include "searchbound/reward.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace searchbound {

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::ispunct(uc)) continue;
    lowered += static_cast<char>(std::tolower(uc));
  }
  std::string out;
  size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    size_t start = i;
    while (i < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    if (start == i) continue;
    std::string_view token(lowered.data() + start, i - start);
    if (token == "a" || token == "an" || token == "the") continue;
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

namespace {

std::vector<std::string> tokens_of(std::string_view text) {
  const std::string norm = normalize_answer(text);
  std::vector<std::string> tokens;
  size_t start = 0;
  while (start < norm.size()) {
    size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

}  // namespace

double accuracy_f1(std::string_view answer, std::string_view gold) {
  const auto pred = tokens_of(answer);
  const auto ref = tokens_of(gold);
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;

  std::unordered_map<std::string, int> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

bool judge_answer(const std::string& answer, const std::string& gold) {
  return accuracy_f1(answer, gold) >= 1.0 - kGateTolerance;
}

bool judge_trajectory(const Trajectory& t, const std::string& gold) {
  if (!t.predicted_answer) return false;
  return judge_answer(*t.predicted_answer, gold);
}

double search_reward(BoundaryLabel label, int n_searches, std::optional<int> n_min,
                     double alpha) {
  if (n_searches < 0) throw std::invalid_argument("n_searches must be >= 0");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  switch (label) {
    case BoundaryLabel::NoSearch:
      return -alpha * static_cast<double>(n_searches);
    case BoundaryLabel::NeedSearch:
      if (!n_min) {
        throw std::invalid_argument("NeedSearch reward requires n_min");
      }
      if (*n_min < 0) throw std::invalid_argument("n_min must be >= 0");
      return -alpha * static_cast<double>(std::max(0, n_searches - *n_min));
    case BoundaryLabel::Undetermined:
      return 0.0;
  }
  throw std::invalid_argument("unknown boundary label");
}

RewardBreakdown total_reward(const Trajectory& t, const std::string& gold,
                             const BoundaryVerdict& verdict, const RewardConfig& config) {
  RewardBreakdown out;
  out.r_acc = accuracy_f1(t.predicted_answer.value_or(""), gold);
  out.r_search = search_reward(verdict.label, search_count(t), verdict.n_min, config.alpha);
  out.gated = config.stage == Stage::StageII && out.r_acc >= 1.0 - kGateTolerance;
  out.total = out.r_acc + (out.gated ? out.r_search : 0.0);
  return out;
}

RewardBreakdown fixed_penalty_reward(const Trajectory& t, const std::string& gold,
                                     double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  RewardBreakdown out;
  out.r_acc = accuracy_f1(t.predicted_answer.value_or(""), gold);
  out.r_search = -alpha * static_cast<double>(search_count(t));
  out.gated = false;
  out.total = out.r_acc + out.r_search;
  return out;
}

}  // namespace searchbound
