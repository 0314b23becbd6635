#include "searchbound/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "searchbound/io.hpp"

namespace searchbound {

const std::array<const char*, kFeatureCount> kFeatureNames = {
    "evidence_progress", "knows_current_hop", "searches_used_fraction", "all_hops_resolved",
    "bias"};

const std::array<const char*, kActionCount> kActionNames = {"search_next", "search_redundant",
                                                            "answer_now"};

namespace {

const Fact* evidence_fact(const AgentState& state, const EntityId& subject,
                          const RelationId& relation) {
  for (const EvidenceItem& item : state.evidence) {
    if (item.fact.subject == subject && item.fact.relation == relation) return &item.fact;
  }
  return nullptr;
}

// Walk the hop chain through collected evidence first, then parametric
// knowledge. Corrupt parametric entries steer the walk onto a wrong entity,
// which is exactly how a bad internal belief poisons later hops.
void refresh_sources(AgentState& state, const ParametricProfile& profile) {
  const Question& q = *state.question;
  state.hop_sources.assign(q.hops.size(), HopSource::Unresolved);
  EntityId cur = q.hops.front().entity;
  for (size_t i = 0; i < q.hops.size(); ++i) {
    const RelationId& r = q.hops[i].relation;
    if (const Fact* f = evidence_fact(state, cur, r)) {
      state.hop_sources[i] = HopSource::Evidence;
      cur = f->object;
      continue;
    }
    ParametricResult p = parametric_lookup(profile, {cur, r});
    if (!p.known) break;  // later hops stay Unresolved
    state.hop_sources[i] = HopSource::Parametric;
    cur = p.answer;
  }
}

// Entity entering hop `index`. Valid only when every earlier hop is resolved,
// which the callers guarantee by picking targets from hop_sources.
EntityId chain_entity(const AgentState& state, const ParametricProfile& profile, size_t index) {
  const Question& q = *state.question;
  EntityId cur = q.hops.front().entity;
  for (size_t i = 0; i < index; ++i) {
    const RelationId& r = q.hops[i].relation;
    if (const Fact* f = evidence_fact(state, cur, r)) {
      cur = f->object;
      continue;
    }
    ParametricResult p = parametric_lookup(profile, {cur, r});
    if (!p.known) throw std::logic_error("hop chain broken before hop " + std::to_string(index));
    cur = p.answer;
  }
  return cur;
}

std::string assemble_answer(const AgentState& state, const ParametricProfile& profile) {
  const Question& q = *state.question;
  EntityId cur = q.hops.front().entity;
  for (const QuestionHop& hop : q.hops) {
    if (const Fact* f = evidence_fact(state, cur, hop.relation)) {
      cur = f->object;
      continue;
    }
    ParametricResult p = parametric_lookup(profile, {cur, hop.relation});
    if (!p.known) return kNoAnswerPlaceholder;
    cur = p.answer;
  }
  return cur;
}

SearchQuery pick_query(const AgentState& state, const ParametricProfile& profile, Action action,
                       Rng& rng) {
  const Question& q = *state.question;
  const std::vector<HopSource>& src = state.hop_sources;
  auto frontier = std::find(src.begin(), src.end(), HopSource::Unresolved);
  if (action == Action::SearchNext && frontier != src.end()) {
    size_t i = static_cast<size_t>(frontier - src.begin());
    return {chain_entity(state, profile, i), q.hops[i].relation};
  }
  // Redundant target: the first parametric hop when one exists (the hop worth
  // double-checking), otherwise a uniformly chosen resolved hop.
  auto parametric = std::find(src.begin(), src.end(), HopSource::Parametric);
  if (parametric != src.end()) {
    size_t i = static_cast<size_t>(parametric - src.begin());
    return {chain_entity(state, profile, i), q.hops[i].relation};
  }
  std::vector<size_t> resolved;
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i] != HopSource::Unresolved) resolved.push_back(i);
  }
  if (resolved.empty()) {
    // Nothing to re-query yet; fall back to the frontier.
    size_t i = static_cast<size_t>(frontier - src.begin());
    return {chain_entity(state, profile, i), q.hops[i].relation};
  }
  size_t i = resolved[rng.index(resolved.size())];
  return {chain_entity(state, profile, i), q.hops[i].relation};
}

}  // namespace

AgentState make_initial_state(const Question& q, const ParametricProfile& profile, Mode mode,
                              int search_cap) {
  if (q.hops.empty()) throw std::invalid_argument("question has no hops: " + q.id);
  if (search_cap < 1) throw std::invalid_argument("search_cap must be >= 1");
  AgentState state;
  state.question = &q;
  state.mode = mode;
  state.search_cap = search_cap;
  refresh_sources(state, profile);
  return state;
}

FeatureVec state_features(const AgentState& state) {
  const std::vector<HopSource>& src = state.hop_sources;
  double n = static_cast<double>(src.size());
  double evidence = std::count(src.begin(), src.end(), HopSource::Evidence) / n;
  double knows = 0.0;
  for (HopSource s : src) {
    if (s == HopSource::Evidence) continue;
    knows = s == HopSource::Parametric ? 1.0 : 0.0;
    break;
  }
  bool all_resolved =
      std::none_of(src.begin(), src.end(), [](HopSource s) { return s == HopSource::Unresolved; });
  double used = static_cast<double>(state.searches_used) / state.search_cap;
  return {evidence, knows, used, all_resolved ? 1.0 : 0.0, 1.0};
}

ActionMask legal_actions(const AgentState& state) {
  bool can_search = state.mode == Mode::SearchEnabled && state.searches_used < state.search_cap;
  return {can_search, can_search, true};
}

ActionDist action_distribution(const PolicyParams& params, const FeatureVec& features,
                               const ActionMask& legal) {
  for (double w : params.w) {
    if (!std::isfinite(w)) throw std::invalid_argument("non-finite policy weight");
  }
  ActionDist logits{};
  double max_logit = -std::numeric_limits<double>::infinity();
  bool any_legal = false;
  for (int a = 0; a < kActionCount; ++a) {
    if (!legal[a]) continue;
    any_legal = true;
    double z = 0.0;
    for (int f = 0; f < kFeatureCount; ++f) z += params.at(f, a) * features[f];
    logits[a] = z;
    max_logit = std::max(max_logit, z);
  }
  if (!any_legal) throw std::invalid_argument("no legal action to distribute over");
  ActionDist dist{};
  double total = 0.0;
  for (int a = 0; a < kActionCount; ++a) {
    if (!legal[a]) continue;
    dist[a] = std::exp(logits[a] - max_logit);
    total += dist[a];
  }
  for (int a = 0; a < kActionCount; ++a) dist[a] /= total;
  return dist;
}

Action sample_action(const ActionDist& dist, Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  int last = -1;
  for (int a = 0; a < kActionCount; ++a) {
    if (dist[a] <= 0.0) continue;
    acc += dist[a];
    last = a;
    if (u < acc) return static_cast<Action>(a);
  }
  if (last < 0) throw std::invalid_argument("action distribution is empty");
  return static_cast<Action>(last);  // u landed past acc due to rounding
}

SampledTrajectory rollout(const PolicyParams& params, const Question& q, Mode mode,
                          const RolloutEnv& env, uint64_t seed) {
  if (env.world == nullptr || env.profile == nullptr) {
    throw std::invalid_argument("rollout env needs a world and a profile");
  }
  Rng rng(seed);
  AgentState state = make_initial_state(q, *env.profile, mode, env.search_cap);
  SampledTrajectory out;
  out.trajectory.question_id = q.id;
  out.trajectory.mode = mode;
  while (true) {
    FeatureVec features = state_features(state);
    ActionMask legal = legal_actions(state);
    ActionDist dist = action_distribution(params, features, legal);
    Action action = sample_action(dist, rng);
    out.decisions.push_back({features, legal, action});
    out.trajectory.steps.push_back({StepKind::Think, kThinkPlaceholder});
    if (action == Action::AnswerNow) {
      std::string answer = assemble_answer(state, *env.profile);
      out.trajectory.steps.push_back({StepKind::Answer, answer});
      out.trajectory.predicted_answer = answer;
      return out;
    }
    SearchQuery query = pick_query(state, *env.profile, action, rng);
    std::vector<EvidenceItem> items =
        retrieve(*env.world, query, env.retrieve_k, {env.p_miss}, rng.next_u64());
    out.trajectory.steps.push_back({StepKind::Search, encode_query(query)});
    out.trajectory.steps.push_back({StepKind::Information, encode_evidence(items)});
    state.evidence.insert(state.evidence.end(), items.begin(), items.end());
    state.searches_used += 1;
    refresh_sources(state, *env.profile);
  }
}

RolloutGroups SampledGroups::trajectories() const {
  RolloutGroups groups;
  groups.disabled.reserve(disabled.size());
  for (const SampledTrajectory& s : disabled) groups.disabled.push_back(s.trajectory);
  groups.enabled.reserve(enabled.size());
  for (const SampledTrajectory& s : enabled) groups.enabled.push_back(s.trajectory);
  return groups;
}

SampledGroups rollout_group(const PolicyParams& params, const Question& q, const RolloutEnv& env,
                            int n_disabled, int n_enabled, uint64_t master_seed,
                            uint64_t step_tag) {
  if (n_disabled < 0 || n_enabled < 0) {
    throw std::invalid_argument("rollout counts must be non-negative");
  }
  SampledGroups groups;
  groups.disabled.reserve(n_disabled);
  groups.enabled.reserve(n_enabled);
  for (int i = 0; i < n_disabled; ++i) {
    groups.disabled.push_back(rollout(params, q, Mode::SearchDisabled, env,
                                      derive_seed(master_seed, q.id, 0, i, step_tag)));
  }
  for (int i = 0; i < n_enabled; ++i) {
    groups.enabled.push_back(rollout(params, q, Mode::SearchEnabled, env,
                                     derive_seed(master_seed, q.id, 1, i, step_tag)));
  }
  return groups;
}

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  nlohmann::json j;
  j["feature_names"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  j["actions"] = std::vector<std::string>(kActionNames.begin(), kActionNames.end());
  j["weights"] = params.w;
  j["step"] = params.step;
  write_file_atomic(path, j.dump(2) + "\n");
}

PolicyParams load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad checkpoint json: " + e.what());
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(key)) {
      throw std::runtime_error(path + ": checkpoint missing \"" + key + "\"");
    }
    return j.at(key);
  };
  const nlohmann::json& names = require("feature_names");
  if (!names.is_array() || names.size() != kFeatureCount) {
    throw std::runtime_error(path + ": feature_names must list " +
                             std::to_string(kFeatureCount) + " names");
  }
  for (int f = 0; f < kFeatureCount; ++f) {
    if (names[f] != kFeatureNames[f]) {
      throw std::runtime_error(path + ": feature_names[" + std::to_string(f) +
                               "] should be \"" + kFeatureNames[f] + "\"");
    }
  }
  const nlohmann::json& actions = require("actions");
  if (!actions.is_array() || actions.size() != kActionCount) {
    throw std::runtime_error(path + ": actions must list " + std::to_string(kActionCount) +
                             " names");
  }
  for (int a = 0; a < kActionCount; ++a) {
    if (actions[a] != kActionNames[a]) {
      throw std::runtime_error(path + ": actions[" + std::to_string(a) + "] should be \"" +
                               kActionNames[a] + "\"");
    }
  }
  PolicyParams params;
  const nlohmann::json& weights = require("weights");
  if (!weights.is_array() || weights.size() != params.w.size()) {
    throw std::runtime_error(path + ": weights must list " + std::to_string(params.w.size()) +
                             " numbers");
  }
  for (size_t i = 0; i < params.w.size(); ++i) {
    if (!weights[i].is_number()) {
      throw std::runtime_error(path + ": weights[" + std::to_string(i) + "] is not a number");
    }
    double v = weights[i].get<double>();
    if (!std::isfinite(v)) {
      throw std::runtime_error(path + ": weights[" + std::to_string(i) + "] is not finite");
    }
    params.w[i] = v;
  }
  const nlohmann::json& step = require("step");
  if (!step.is_number_integer() || step.get<int64_t>() < 0) {
    throw std::runtime_error(path + ": step must be a non-negative integer");
  }
  params.step = static_cast<int>(step.get<int64_t>());
  return params;
}

}  // namespace searchbound
