#include "searchbound/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "searchbound/io.hpp"
#include "searchbound/rng.hpp"

namespace searchbound {

namespace {

// Slot-filling parallel map: fn(i) writes only into slot i, so results (and
// which exception wins) never depend on the worker count.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  if (n == 0) return;
  int w = std::max(1, std::min(workers, static_cast<int>(n)));
  if (w == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto body = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (int t = 0; t < w; ++t) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  for (size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::StageWise: return "stagewise";
    case Variant::OutcomeOnly: return "outcome_only";
    case Variant::FixedPenalty: return "fixed_penalty";
    case Variant::GatedFromStart: return "gated_from_start";
    case Variant::FrozenBoundary: return "frozen_boundary";
  }
  throw std::logic_error("unhandled variant");
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::StageWise, Variant::OutcomeOnly, Variant::FixedPenalty,
                    Variant::GatedFromStart, Variant::FrozenBoundary}) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant \"" + name +
                              "\"; expected one of stagewise, outcome_only, fixed_penalty, "
                              "gated_from_start, frozen_boundary");
}

void validate_config(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (c.steps < 1) fail("steps must be >= 1");
  if (c.questions_per_step < 1) fail("questions_per_step must be >= 1");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (!(c.clip_ratio > 0.0)) fail("clip_ratio must be positive");
  if (c.kl_coeff < 0.0) fail("kl_coeff must be non-negative");
  if (c.alpha < 0.0) fail("alpha must be non-negative");
  if (c.delta < 1) fail("delta must be >= 1");
  if (c.n_disabled < 1) fail("n_disabled must be >= 1");
  if (c.n_enabled < 1) fail("n_enabled must be >= 1");
  if (c.search_cap < 1) fail("search_cap must be >= 1");
  if (c.retrieve_k < 1) fail("retrieve_k must be >= 1");
  if (c.p_miss < 0.0 || c.p_miss > 1.0) fail("p_miss must be in [0, 1]");
  if (c.plateau.patience < 1) fail("patience must be >= 1");
  if (c.plateau.min_delta < 0.0) fail("min_delta must be non-negative");
  if (c.val_every < 1) fail("val_every must be >= 1");
  if (c.val_rollouts < 1) fail("val_rollouts must be >= 1");
  if (!std::isfinite(c.init_answer_bias)) fail("init_answer_bias must be finite");
  if (c.stage_switch_step.has_value() && *c.stage_switch_step < 0) {
    fail("stage_switch_step must be >= 0");
  }
  if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) fail("val_fraction must be in [0, 1)");
  if (c.workers < 1) fail("workers must be >= 1");
}

TrainConfig load_train_config(const std::string& path, std::string* env_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": bad config json: " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error(path + ": config must be a json object");
  static const std::unordered_set<std::string> known = {
      "steps",      "questions_per_step", "lr",       "clip_ratio",
      "kl_coeff",   "alpha",              "delta",    "n_disabled",
      "n_enabled",  "search_cap",         "retrieve_k", "p_miss",
      "patience",   "min_delta",          "val_every", "val_rollouts",
      "init_answer_bias", "stage_switch_step", "variant",
      "seed",       "val_fraction",       "include_disabled_in_update", "workers",
      "env_dir"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw std::runtime_error(path + ": unknown config key \"" + item.key() + "\"");
    }
  }
  TrainConfig c;
  auto get_int = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) {
      throw std::runtime_error(path + ": \"" + key + "\" must be an integer");
    }
    out = j[key].get<int>();
  };
  auto get_double = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw std::runtime_error(path + ": \"" + key + "\" must be a number");
    out = j[key].get<double>();
  };
  get_int("steps", c.steps);
  get_int("questions_per_step", c.questions_per_step);
  get_double("lr", c.lr);
  get_double("clip_ratio", c.clip_ratio);
  get_double("kl_coeff", c.kl_coeff);
  get_double("alpha", c.alpha);
  get_int("delta", c.delta);
  get_int("n_disabled", c.n_disabled);
  get_int("n_enabled", c.n_enabled);
  get_int("search_cap", c.search_cap);
  get_int("retrieve_k", c.retrieve_k);
  get_double("p_miss", c.p_miss);
  get_int("patience", c.plateau.patience);
  get_double("min_delta", c.plateau.min_delta);
  get_int("val_every", c.val_every);
  get_int("val_rollouts", c.val_rollouts);
  get_double("init_answer_bias", c.init_answer_bias);
  if (j.contains("stage_switch_step") && !j["stage_switch_step"].is_null()) {
    if (!j["stage_switch_step"].is_number_integer()) {
      throw std::runtime_error(path + ": \"stage_switch_step\" must be an integer or null");
    }
    c.stage_switch_step = j["stage_switch_step"].get<int>();
  }
  if (j.contains("variant")) {
    if (!j["variant"].is_string()) throw std::runtime_error(path + ": \"variant\" must be a string");
    c.variant = parse_variant(j["variant"].get<std::string>());
  }
  if (j.contains("seed")) {
    const nlohmann::json& s = j["seed"];
    bool ok = s.is_number_unsigned() || (s.is_number_integer() && s.get<int64_t>() >= 0);
    if (!ok) throw std::runtime_error(path + ": \"seed\" must be a non-negative integer");
    c.seed = s.get<uint64_t>();
  }
  get_double("val_fraction", c.val_fraction);
  if (j.contains("include_disabled_in_update")) {
    if (!j["include_disabled_in_update"].is_boolean()) {
      throw std::runtime_error(path + ": \"include_disabled_in_update\" must be a boolean");
    }
    c.include_disabled_in_update = j["include_disabled_in_update"].get<bool>();
  }
  get_int("workers", c.workers);
  if (j.contains("env_dir")) {
    if (!j["env_dir"].is_string()) throw std::runtime_error(path + ": \"env_dir\" must be a string");
    if (env_dir != nullptr) *env_dir = j["env_dir"].get<std::string>();
  }
  validate_config(c);
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["steps"] = c.steps;
  j["questions_per_step"] = c.questions_per_step;
  j["lr"] = c.lr;
  j["clip_ratio"] = c.clip_ratio;
  j["kl_coeff"] = c.kl_coeff;
  j["alpha"] = c.alpha;
  j["delta"] = c.delta;
  j["n_disabled"] = c.n_disabled;
  j["n_enabled"] = c.n_enabled;
  j["search_cap"] = c.search_cap;
  j["retrieve_k"] = c.retrieve_k;
  j["p_miss"] = c.p_miss;
  j["patience"] = c.plateau.patience;
  j["min_delta"] = c.plateau.min_delta;
  j["val_every"] = c.val_every;
  j["val_rollouts"] = c.val_rollouts;
  j["init_answer_bias"] = c.init_answer_bias;
  j["stage_switch_step"] =
      c.stage_switch_step.has_value() ? nlohmann::json(*c.stage_switch_step) : nlohmann::json();
  j["variant"] = variant_name(c.variant);
  j["seed"] = c.seed;
  j["val_fraction"] = c.val_fraction;
  j["include_disabled_in_update"] = c.include_disabled_in_update;
  j["workers"] = c.workers;
  return j.dump(2);
}

std::vector<double> normalize_group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("cannot normalize an empty reward group");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double sd = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd == 0.0) return out;
  for (size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + 1e-8);
  return out;
}

namespace {

double kl_of(const ActionDist& p, const ActionDist& q, const ActionMask& legal) {
  double kl = 0.0;
  for (int a = 0; a < kActionCount; ++a) {
    if (!legal[a] || p[a] <= 0.0) continue;
    kl += p[a] * std::log(p[a] / q[a]);
  }
  return kl;
}

void check_batch(std::span<const DecisionItem> batch, double clip_ratio) {
  if (batch.empty()) throw std::invalid_argument("surrogate: empty decision batch");
  if (!(clip_ratio > 0.0)) throw std::invalid_argument("clip_ratio must be positive");
  for (const DecisionItem& d : batch) {
    if (!d.legal[static_cast<int>(d.action)]) {
      throw std::invalid_argument("surrogate: sampled action is illegal in its recorded state");
    }
  }
}

}  // namespace

double surrogate_objective(const PolicyParams& params, const PolicyParams& old_params,
                           std::span<const DecisionItem> batch, double clip_ratio,
                           double kl_coeff) {
  check_batch(batch, clip_ratio);
  double surr = 0.0;
  double kl = 0.0;
  for (const DecisionItem& d : batch) {
    ActionDist p = action_distribution(params, d.features, d.legal);
    ActionDist q = action_distribution(old_params, d.features, d.legal);
    int a = static_cast<int>(d.action);
    double rho = p[a] / q[a];
    double clipped = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio);
    surr += std::min(rho * d.advantage, clipped * d.advantage);
    kl += kl_of(p, q, d.legal);
  }
  double m = static_cast<double>(batch.size());
  return surr / m - kl_coeff * kl / m;
}

GradVec surrogate_gradient(const PolicyParams& params, const PolicyParams& old_params,
                           std::span<const DecisionItem> batch, double clip_ratio,
                           double kl_coeff) {
  check_batch(batch, clip_ratio);
  GradVec g{};
  for (const DecisionItem& d : batch) {
    ActionDist p = action_distribution(params, d.features, d.legal);
    ActionDist q = action_distribution(old_params, d.features, d.legal);
    int a = static_cast<int>(d.action);
    double rho = p[a] / q[a];
    double unclipped = rho * d.advantage;
    double clipped = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio) * d.advantage;
    // min picks the unclipped branch: gradient A * rho * dlog pi(a);
    // otherwise the clipped value is a constant in the saturated region.
    if (unclipped <= clipped) {
      double coeff = d.advantage * rho;
      for (int f = 0; f < kFeatureCount; ++f) {
        for (int b = 0; b < kActionCount; ++b) {
          if (!d.legal[b]) continue;
          g[f * kActionCount + b] += coeff * d.features[f] * ((b == a ? 1.0 : 0.0) - p[b]);
        }
      }
    }
    if (kl_coeff != 0.0) {
      double kl_state = kl_of(p, q, d.legal);
      for (int b = 0; b < kActionCount; ++b) {
        if (!d.legal[b] || p[b] <= 0.0) continue;
        double term = p[b] * (std::log(p[b] / q[b]) - kl_state);
        for (int f = 0; f < kFeatureCount; ++f) {
          g[f * kActionCount + b] -= kl_coeff * d.features[f] * term;
        }
      }
    }
  }
  double m = static_cast<double>(batch.size());
  for (double& v : g) v /= m;
  return g;
}

UpdateResult update_policy(const PolicyParams& params, std::span<const WeightedSample> batch,
                           const PolicyParams& old_params, double lr, double clip_ratio,
                           double kl_coeff) {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  std::vector<DecisionItem> items;
  for (const WeightedSample& ws : batch) {
    for (const Decision& d : ws.sample.decisions) {
      items.push_back({d.features, d.legal, d.action, ws.advantage});
    }
  }
  if (items.empty()) throw std::invalid_argument("update_policy: batch carries no decisions");
  GradVec g = surrogate_gradient(params, old_params, items, clip_ratio, kl_coeff);
  for (size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      int f = static_cast<int>(i) / kActionCount;
      int a = static_cast<int>(i) % kActionCount;
      throw std::runtime_error(std::string("update aborted: non-finite gradient for weight(") +
                               kFeatureNames[f] + ", " + kActionNames[a] + ") over " +
                               std::to_string(items.size()) + " decisions");
    }
  }
  UpdateResult result;
  result.params = params;
  for (size_t i = 0; i < g.size(); ++i) result.params.w[i] += lr * g[i];
  double ratio_sum = 0.0;
  double kl_sum = 0.0;
  int clipped = 0;
  for (const DecisionItem& d : items) {
    ActionDist p = action_distribution(result.params, d.features, d.legal);
    ActionDist q = action_distribution(old_params, d.features, d.legal);
    double rho = p[static_cast<int>(d.action)] / q[static_cast<int>(d.action)];
    ratio_sum += rho;
    if (rho < 1.0 - clip_ratio || rho > 1.0 + clip_ratio) ++clipped;
    kl_sum += kl_of(p, q, d.legal);
  }
  double m = static_cast<double>(items.size());
  result.stats.decisions = static_cast<int>(items.size());
  result.stats.mean_ratio = ratio_sum / m;
  result.stats.clip_fraction = static_cast<double>(clipped) / m;
  result.stats.mean_kl = kl_sum / m;
  return result;
}

bool detect_plateau(std::span<const double> history, int patience, double min_delta) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (history.size() < static_cast<size_t>(patience)) return false;
  size_t window_start = history.size() - static_cast<size_t>(patience);
  double best = -std::numeric_limits<double>::infinity();
  bool plateau = true;
  for (size_t i = 0; i < history.size(); ++i) {
    if (i >= window_start && history[i] - best >= min_delta) plateau = false;
    best = std::max(best, history[i]);
  }
  return plateau;
}

std::pair<std::vector<Question>, std::vector<Question>> split_questions(
    std::span<const Question> questions, double val_fraction) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  }
  size_t val_n = static_cast<size_t>(std::floor(val_fraction * static_cast<double>(questions.size())));
  size_t train_n = questions.size() - val_n;
  std::vector<Question> train(questions.begin(), questions.begin() + train_n);
  std::vector<Question> val(questions.begin() + train_n, questions.end());
  return {std::move(train), std::move(val)};
}

namespace {

const std::vector<std::string> kLogColumns = {
    "step", "stage", "mean_f1", "mean_sc", "no_search_ratio", "redundant_search_ratio",
    "label_no_search", "label_need_search", "label_undetermined", "val_f1"};

}  // namespace

void save_training_log(const std::string& path, std::span<const StepRecord> log) {
  std::string out = csv_row(kLogColumns);
  for (const StepRecord& r : log) {
    out += csv_row({std::to_string(r.step), std::to_string(r.stage), fmt_double(r.mean_f1),
                    fmt_double(r.mean_sc), fmt_double(r.no_search_ratio),
                    r.redundant_search_ratio.has_value() ? fmt_double(*r.redundant_search_ratio)
                                                         : "",
                    std::to_string(r.label_no_search), std::to_string(r.label_need_search),
                    std::to_string(r.label_undetermined), fmt_double(r.val_f1)});
  }
  write_file_atomic(path, out);
}

namespace {

int parse_log_int(const std::string& field, const std::string& path, size_t line) {
  try {
    size_t pos = 0;
    int v = std::stoi(field, &pos);
    if (pos != field.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": bad integer \"" + field + "\"");
  }
}

double parse_log_double(const std::string& field, const std::string& path, size_t line) {
  try {
    size_t pos = 0;
    double v = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": bad number \"" + field + "\"");
  }
}

}  // namespace

std::vector<StepRecord> load_training_log(const std::string& path) {
  std::string text = read_file(path);
  std::vector<std::string> lines;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw std::runtime_error(path + ": empty training log");
  std::vector<std::string> header = split_csv_row(lines[0]);
  if (header.size() != kLogColumns.size()) {
    throw std::runtime_error(path + ": expected " + std::to_string(kLogColumns.size()) +
                             " columns, found " + std::to_string(header.size()));
  }
  for (size_t i = 0; i < kLogColumns.size(); ++i) {
    if (header[i] != kLogColumns[i]) {
      throw std::runtime_error(path + ": expected column " + std::to_string(i + 1) + " \"" +
                               kLogColumns[i] + "\", found \"" + header[i] + "\"");
    }
  }
  std::vector<StepRecord> log;
  for (size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    std::vector<std::string> fields = split_csv_row(lines[li]);
    if (fields.size() != kLogColumns.size()) {
      throw std::runtime_error(path + ":" + std::to_string(li + 1) + ": expected " +
                               std::to_string(kLogColumns.size()) + " fields, found " +
                               std::to_string(fields.size()));
    }
    StepRecord r;
    r.step = parse_log_int(fields[0], path, li + 1);
    r.stage = parse_log_int(fields[1], path, li + 1);
    r.mean_f1 = parse_log_double(fields[2], path, li + 1);
    r.mean_sc = parse_log_double(fields[3], path, li + 1);
    r.no_search_ratio = parse_log_double(fields[4], path, li + 1);
    if (!fields[5].empty()) r.redundant_search_ratio = parse_log_double(fields[5], path, li + 1);
    r.label_no_search = parse_log_int(fields[6], path, li + 1);
    r.label_need_search = parse_log_int(fields[7], path, li + 1);
    r.label_undetermined = parse_log_int(fields[8], path, li + 1);
    r.val_f1 = parse_log_double(fields[9], path, li + 1);
    log.push_back(r);
  }
  return log;
}

namespace {

std::vector<size_t> sample_indices(size_t pool, int k, uint64_t seed) {
  std::vector<size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  for (int j = 0; j < k; ++j) {
    size_t pick = static_cast<size_t>(j) + rng.index(pool - static_cast<size_t>(j));
    std::swap(idx[static_cast<size_t>(j)], idx[pick]);
  }
  idx.resize(static_cast<size_t>(k));
  return idx;
}

double variant_reward(Variant variant, Stage stage, const Trajectory& t, const std::string& gold,
                      const BoundaryVerdict& verdict, double alpha) {
  switch (variant) {
    case Variant::FixedPenalty:
      return fixed_penalty_reward(t, gold, alpha).total;
    case Variant::OutcomeOnly:
      return total_reward(t, gold, verdict, {alpha, Stage::StageI}).total;
    case Variant::GatedFromStart:
    case Variant::FrozenBoundary:
      return total_reward(t, gold, verdict, {alpha, Stage::StageII}).total;
    case Variant::StageWise:
      return total_reward(t, gold, verdict, {alpha, stage}).total;
  }
  throw std::logic_error("unhandled variant");
}

}  // namespace

TrainResult train_run(const TrainConfig& config, const World& world,
                      std::span<const Question> questions, const ParametricProfile& profile) {
  validate_config(config);
  if (questions.empty()) throw std::invalid_argument("train_run: question set is empty");
  auto [train_qs, val_qs] = split_questions(questions, config.val_fraction);
  if (train_qs.size() < static_cast<size_t>(config.questions_per_step)) {
    throw std::invalid_argument("train_run: question pool exhausted: questions_per_step=" +
                                std::to_string(config.questions_per_step) + " but only " +
                                std::to_string(train_qs.size()) + " training questions");
  }
  if (config.variant == Variant::StageWise && !config.stage_switch_step.has_value() &&
      val_qs.empty()) {
    throw std::invalid_argument(
        "train_run: plateau detection needs a validation split; raise val_fraction or set "
        "stage_switch_step");
  }

  RolloutEnv env;
  env.world = &world;
  env.profile = &profile;
  env.retrieve_k = config.retrieve_k;
  env.p_miss = config.p_miss;
  env.search_cap = config.search_cap;

  PolicyParams params;
  params.at(kAllResolvedFeature, static_cast<int>(Action::AnswerNow)) = config.init_answer_bias;

  std::unordered_map<std::string, BoundaryVerdict> frozen;
  if (config.variant == Variant::FrozenBoundary) {
    uint64_t frozen_master = derive_seed(config.seed, "frozen_boundary");
    std::vector<BoundaryVerdict> verdicts(train_qs.size());
    parallel_for(train_qs.size(), config.workers, [&](size_t i) {
      const Question& q = train_qs[i];
      SampledGroups groups =
          rollout_group(params, q, env, config.n_disabled, config.n_enabled, frozen_master, 0);
      verdicts[i] = evaluate_boundary(groups.trajectories(), make_f1_judge(q.gold), config.delta);
    });
    for (size_t i = 0; i < train_qs.size(); ++i) frozen.emplace(train_qs[i].id, verdicts[i]);
  }

  TrainResult result;
  int stage_now =
      (config.variant == Variant::GatedFromStart || config.variant == Variant::FrozenBoundary)
          ? 2
          : 1;
  std::vector<double> val_history;  // one entry per validation round
  double round_sum = 0.0;           // val_f1 accumulated inside the current round

  struct QuestionWork {
    SampledGroups groups;
    BoundaryVerdict verdict;
    std::vector<double> adv_disabled;
    std::vector<double> adv_enabled;
  };

  for (int step = 0; step < config.steps; ++step) {
    if (config.variant == Variant::StageWise && stage_now == 1) {
      bool fire = config.stage_switch_step.has_value()
                      ? step >= *config.stage_switch_step
                      : detect_plateau(val_history, config.plateau.patience,
                                       config.plateau.min_delta);
      if (fire) {
        stage_now = 2;
        result.stage_switch_step = step;
      }
    }
    Stage stage = stage_now == 2 ? Stage::StageII : Stage::StageI;

    std::vector<size_t> picked =
        sample_indices(train_qs.size(), config.questions_per_step,
                       derive_seed(config.seed, "sample", static_cast<uint64_t>(step)));

    std::vector<QuestionWork> work(picked.size());
    parallel_for(picked.size(), config.workers, [&](size_t i) {
      const Question& q = train_qs[picked[i]];
      QuestionWork& w = work[i];
      w.groups = rollout_group(params, q, env, config.n_disabled, config.n_enabled, config.seed,
                               static_cast<uint64_t>(step));
      if (config.variant == Variant::FrozenBoundary) {
        w.verdict = frozen.at(q.id);
      } else {
        w.verdict =
            evaluate_boundary(w.groups.trajectories(), make_f1_judge(q.gold), config.delta);
      }
      std::vector<double> rewards_d;
      std::vector<double> rewards_e;
      rewards_d.reserve(w.groups.disabled.size());
      rewards_e.reserve(w.groups.enabled.size());
      for (const SampledTrajectory& s : w.groups.disabled) {
        rewards_d.push_back(
            variant_reward(config.variant, stage, s.trajectory, q.gold, w.verdict, config.alpha));
      }
      for (const SampledTrajectory& s : w.groups.enabled) {
        rewards_e.push_back(
            variant_reward(config.variant, stage, s.trajectory, q.gold, w.verdict, config.alpha));
      }
      w.adv_disabled = normalize_group_advantages(rewards_d);
      w.adv_enabled = normalize_group_advantages(rewards_e);
    });

    std::vector<WeightedSample> batch;
    std::vector<Trajectory> enabled_trajectories;
    StepRecord record;
    record.step = step;
    record.stage = stage_now;
    double f1_sum = 0.0;
    long sc_sum = 0;
    int enabled_count = 0;
    for (size_t i = 0; i < work.size(); ++i) {
      const Question& q = train_qs[picked[i]];
      QuestionWork& w = work[i];
      if (config.include_disabled_in_update) {
        for (size_t d = 0; d < w.groups.disabled.size(); ++d) {
          batch.push_back({w.groups.disabled[d], w.adv_disabled[d]});
        }
      }
      for (size_t e = 0; e < w.groups.enabled.size(); ++e) {
        batch.push_back({w.groups.enabled[e], w.adv_enabled[e]});
      }
      for (const SampledTrajectory& s : w.groups.enabled) {
        f1_sum += accuracy_f1(s.trajectory.predicted_answer.value_or(""), q.gold);
        sc_sum += search_count(s.trajectory);
        enabled_trajectories.push_back(s.trajectory);
        ++enabled_count;
      }
      switch (w.verdict.label) {
        case BoundaryLabel::NoSearch: ++record.label_no_search; break;
        case BoundaryLabel::NeedSearch: ++record.label_need_search; break;
        case BoundaryLabel::Undetermined: ++record.label_undetermined; break;
      }
      result.boundary_log.push_back({step, q.id, w.verdict});
    }
    record.mean_f1 = f1_sum / static_cast<double>(enabled_count);
    record.mean_sc = static_cast<double>(sc_sum) / static_cast<double>(enabled_count);
    DynamicsStats dynamics = compute_dynamics(enabled_trajectories, world, profile);
    record.no_search_ratio = dynamics.no_search_ratio;
    record.redundant_search_ratio = dynamics.redundant_search_ratio;

    UpdateResult update =
        update_policy(params, batch, params, config.lr, config.clip_ratio, config.kl_coeff);
    params = update.params;
    params.step = step + 1;

    if (!val_qs.empty()) {
      std::vector<double> scores(val_qs.size());
      parallel_for(val_qs.size(), config.workers, [&](size_t vi) {
        const Question& q = val_qs[vi];
        double sum = 0.0;
        for (int r = 0; r < config.val_rollouts; ++r) {
          SampledTrajectory s =
              rollout(params, q, Mode::SearchEnabled, env,
                      derive_seed(config.seed, "val", static_cast<uint64_t>(step),
                                  static_cast<uint64_t>(vi), static_cast<uint64_t>(r)));
          sum += accuracy_f1(s.trajectory.predicted_answer.value_or(""), q.gold);
        }
        scores[vi] = sum / config.val_rollouts;
      });
      double total = 0.0;
      for (double v : scores) total += v;
      record.val_f1 = total / static_cast<double>(scores.size());
      // A round's score is the mean over its steps: single-step scores are too
      // noisy for min_delta comparisons.
      round_sum += record.val_f1;
      if ((step + 1) % config.val_every == 0) {
        val_history.push_back(round_sum / config.val_every);
        round_sum = 0.0;
      }
    }
    result.log.push_back(record);
  }
  result.params = params;
  return result;
}

std::vector<EvalRecord> evaluate_policy(const PolicyParams& params,
                                        std::span<const Question> questions,
                                        const RolloutEnv& env, uint64_t seed, int workers) {
  if (env.world == nullptr || env.profile == nullptr) {
    throw std::invalid_argument("evaluate_policy: env needs a world and a profile");
  }
  std::vector<EvalRecord> records(questions.size());
  parallel_for(questions.size(), workers, [&](size_t i) {
    const Question& q = questions[i];
    SampledTrajectory s =
        rollout(params, q, Mode::SearchEnabled, env, derive_seed(seed, q.id, 2, 0, 0));
    records[i] = make_eval_record(q, s.trajectory, *env.profile);
  });
  return records;
}

double mean_answer_f1(std::span<const EvalRecord> records) {
  if (records.empty()) throw std::invalid_argument("mean_answer_f1: no records");
  double total = 0.0;
  for (const EvalRecord& r : records) {
    total += accuracy_f1(r.trajectory.predicted_answer.value_or(""), r.gold);
  }
  return total / static_cast<double>(records.size());
}

}  // namespace searchbound
