#include "searchbound/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "searchbound/io.hpp"
#include "searchbound/rng.hpp"

namespace searchbound {

using nlohmann::json;

std::string pair_key(const EntityId& subject, const RelationId& relation) {
  std::string key = subject;
  key += '\x1f';
  key += relation;
  return key;
}

void World::build_index() {
  fact_by_pair.clear();
  facts_by_subject.clear();
  facts_by_relation.clear();
  for (size_t i = 0; i < facts.size(); ++i) {
    const Fact& f = facts[i];
    auto [it, inserted] = fact_by_pair.emplace(pair_key(f.subject, f.relation), i);
    if (!inserted) {
      throw std::runtime_error("duplicate fact for pair (" + f.subject + ", " + f.relation + ")");
    }
    facts_by_subject[f.subject].push_back(i);
    facts_by_relation[f.relation].push_back(i);
  }
}

const Fact* World::find_fact(const EntityId& subject, const RelationId& relation) const {
  auto it = fact_by_pair.find(pair_key(subject, relation));
  return it == fact_by_pair.end() ? nullptr : &facts[it->second];
}

bool World::has_entity(const EntityId& e) const {
  return std::find(entities.begin(), entities.end(), e) != entities.end();
}

bool World::has_relation(const RelationId& r) const {
  return std::find(relations.begin(), relations.end(), r) != relations.end();
}

namespace {

void validate_world_config(const WorldConfig& c) {
  if (c.entity_count < 1) throw std::invalid_argument("entity_count must be >= 1");
  if (c.relation_count < 1) throw std::invalid_argument("relation_count must be >= 1");
  if (c.fact_density < 0.0 || c.fact_density > 1.0) {
    throw std::invalid_argument("fact_density must be in [0, 1]");
  }
  if (c.max_chain_depth < 0) throw std::invalid_argument("max_chain_depth must be >= 0");
  if (c.entity_count < c.max_chain_depth + 1) {
    throw std::invalid_argument("a chain of depth " + std::to_string(c.max_chain_depth) +
                                " needs at least " + std::to_string(c.max_chain_depth + 1) +
                                " entities");
  }
}

}  // namespace

World generate_world(const WorldConfig& config, uint64_t seed) {
  validate_world_config(config);

  World world;
  world.seed = seed;
  world.entities.reserve(config.entity_count);
  for (int i = 0; i < config.entity_count; ++i) world.entities.push_back("e" + std::to_string(i));
  world.relations.reserve(config.relation_count);
  for (int i = 0; i < config.relation_count; ++i) world.relations.push_back("r" + std::to_string(i));

  const size_t pair_total = static_cast<size_t>(config.entity_count) * config.relation_count;
  const size_t target = static_cast<size_t>(
      std::llround(config.fact_density * static_cast<double>(pair_total)));

  // (entity idx, relation idx) -> taken
  std::vector<char> pair_used(pair_total, 0);
  auto pair_slot = [&](int e, int r) { return static_cast<size_t>(e) * config.relation_count + r; };

  struct RawFact {
    int s, r, o;
  };
  std::vector<RawFact> raw;
  raw.reserve(target);

  // Plant one chain of max_chain_depth over distinct entities so the depth is
  // reachable whenever the fact budget allows it.
  if (config.max_chain_depth >= 1 &&
      target >= static_cast<size_t>(config.max_chain_depth)) {
    Rng rng(derive_seed(seed, "chain"));
    std::vector<int> order(config.entity_count);
    for (int i = 0; i < config.entity_count; ++i) order[i] = i;
    shuffle(order, rng);
    for (int i = 0; i < config.max_chain_depth; ++i) {
      int rel = static_cast<int>(rng.below(config.relation_count));
      raw.push_back({order[i], rel, order[i + 1]});
      pair_used[pair_slot(order[i], rel)] = 1;
    }
  }

  if (raw.size() < target && config.entity_count >= 2) {
    Rng rng(derive_seed(seed, "fill"));
    std::vector<size_t> free_pairs;
    free_pairs.reserve(pair_total - raw.size());
    for (size_t p = 0; p < pair_total; ++p) {
      if (!pair_used[p]) free_pairs.push_back(p);
    }
    shuffle(free_pairs, rng);
    for (size_t p : free_pairs) {
      if (raw.size() >= target) break;
      int s = static_cast<int>(p / config.relation_count);
      int r = static_cast<int>(p % config.relation_count);
      int o = s;
      while (o == s) o = static_cast<int>(rng.below(config.entity_count));
      raw.push_back({s, r, o});
    }
  }

  std::sort(raw.begin(), raw.end(), [](const RawFact& a, const RawFact& b) {
    return a.s != b.s ? a.s < b.s : a.r < b.r;
  });
  world.facts.reserve(raw.size());
  for (const RawFact& f : raw) {
    world.facts.push_back({world.entities[f.s], world.relations[f.r], world.entities[f.o]});
  }
  world.build_index();
  return world;
}

namespace {

// can_start[m][e]: entity index e has an outgoing walk of exactly m facts.
std::vector<std::vector<char>> walk_reachability(const World& world,
                                                 const std::unordered_map<std::string, int>& pos,
                                                 int max_depth) {
  std::vector<std::vector<char>> can(max_depth + 1,
                                     std::vector<char>(world.entities.size(), 0));
  std::fill(can[0].begin(), can[0].end(), 1);
  for (int m = 1; m <= max_depth; ++m) {
    for (const Fact& f : world.facts) {
      int s = pos.at(f.subject);
      int o = pos.at(f.object);
      if (can[m - 1][o]) can[m][s] = 1;
    }
  }
  return can;
}

std::string render_question_text(const std::vector<QuestionHop>& hops) {
  std::string inner = hops.front().entity;
  for (const QuestionHop& hop : hops) inner = hop.relation + " of " + inner;
  return "What is " + inner + "?";
}

}  // namespace

std::vector<Question> generate_questions(const World& world, const QuestionConfig& config,
                                         uint64_t seed) {
  if (config.count < 0) throw std::invalid_argument("question count must be >= 0");
  if (config.hop_distribution.empty()) {
    throw std::invalid_argument("hop_distribution must be non-empty");
  }
  double total_p = 0.0;
  int max_hops = 0;
  for (const auto& [hops, p] : config.hop_distribution) {
    if (hops < 1) throw std::invalid_argument("hop counts must be >= 1");
    if (p <= 0.0) throw std::invalid_argument("hop probabilities must be > 0");
    total_p += p;
    max_hops = std::max(max_hops, hops);
  }
  if (std::abs(total_p - 1.0) > 1e-9) {
    throw std::invalid_argument("hop_distribution probabilities must sum to 1");
  }

  std::unordered_map<std::string, int> pos;
  for (size_t i = 0; i < world.entities.size(); ++i) {
    pos[world.entities[i]] = static_cast<int>(i);
  }
  const auto can = walk_reachability(world, pos, max_hops);

  std::unordered_map<int, std::vector<int>> starts_by_depth;
  for (const auto& [hops, p] : config.hop_distribution) {
    std::vector<int> starts;
    for (size_t e = 0; e < world.entities.size(); ++e) {
      if (can[hops][e]) starts.push_back(static_cast<int>(e));
    }
    if (starts.empty()) {
      throw std::runtime_error("world has no chain of length " + std::to_string(hops));
    }
    starts_by_depth[hops] = std::move(starts);
  }

  // One draw per question from a dedicated stream, so the per-hop counts can
  // be re-derived independently of the walk sampling below.
  Rng hop_rng(derive_seed(seed, "hops"));
  std::vector<int> hop_choice(config.count);
  for (int i = 0; i < config.count; ++i) {
    double u = hop_rng.next_double();
    double cum = 0.0;
    int chosen = config.hop_distribution.rbegin()->first;
    for (const auto& [hops, p] : config.hop_distribution) {
      cum += p;
      if (u < cum) {
        chosen = hops;
        break;
      }
    }
    hop_choice[i] = chosen;
  }

  std::vector<Question> questions;
  questions.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    const int depth = hop_choice[i];
    Rng rng(derive_seed(seed, "walk", static_cast<uint64_t>(i)));
    const auto& starts = starts_by_depth[depth];
    int cur = starts[rng.index(starts.size())];

    Question q;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "q%05d", i);
    q.id = idbuf;
    q.hop_count = depth;
    for (int m = depth; m >= 1; --m) {
      const auto& outgoing = world.facts_by_subject.at(world.entities[cur]);
      std::vector<size_t> usable;
      for (size_t fi : outgoing) {
        if (can[m - 1][pos.at(world.facts[fi].object)]) usable.push_back(fi);
      }
      const Fact& f = world.facts[usable[rng.index(usable.size())]];
      q.hops.push_back({f.subject, f.relation});
      cur = pos.at(f.object);
    }
    q.gold = world.entities[cur];
    q.text = render_question_text(q.hops);
    questions.push_back(std::move(q));
  }
  return questions;
}

std::optional<EntityId> follow_chain(const World& world, const Question& q) {
  if (q.hops.empty()) return std::nullopt;
  EntityId cur = q.hops.front().entity;
  for (const QuestionHop& hop : q.hops) {
    if (hop.entity != cur) return std::nullopt;
    const Fact* f = world.find_fact(hop.entity, hop.relation);
    if (!f) return std::nullopt;
    cur = f->object;
  }
  return cur;
}

std::vector<EvidenceItem> retrieve(const World& world, const SearchQuery& query, int k,
                                   const RetrievalNoise& noise, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("retrieval k must be >= 1");
  if (noise.p_miss < 0.0 || noise.p_miss > 1.0) {
    throw std::invalid_argument("p_miss must be in [0, 1]");
  }
  if (!world.has_entity(query.entity)) {
    throw std::invalid_argument("unknown entity id: " + query.entity);
  }
  if (!world.has_relation(query.relation)) {
    throw std::invalid_argument("unknown relation id: " + query.relation);
  }

  Rng rng(seed);
  auto gold_it = world.fact_by_pair.find(pair_key(query.entity, query.relation));
  const bool gold_exists = gold_it != world.fact_by_pair.end();
  bool include_gold = false;
  if (gold_exists) include_gold = !rng.bernoulli(noise.p_miss);

  std::vector<size_t> pool;
  {
    auto subj_it = world.facts_by_subject.find(query.entity);
    if (subj_it != world.facts_by_subject.end()) pool = subj_it->second;
    auto rel_it = world.facts_by_relation.find(query.relation);
    if (rel_it != world.facts_by_relation.end()) {
      pool.insert(pool.end(), rel_it->second.begin(), rel_it->second.end());
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (gold_exists) {
      pool.erase(std::remove(pool.begin(), pool.end(), gold_it->second), pool.end());
    }
  }

  const size_t slots = static_cast<size_t>(k) - (include_gold ? 1 : 0);
  const size_t take = std::min(slots, pool.size());
  for (size_t i = 0; i < take; ++i) {
    size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }

  std::vector<EvidenceItem> result;
  result.reserve(take + 1);
  for (size_t i = 0; i < take; ++i) {
    result.push_back({world.facts[pool[i]], false, query});
  }
  if (include_gold) {
    size_t at = rng.index(result.size() + 1);
    result.insert(result.begin() + static_cast<ptrdiff_t>(at),
                  {world.facts[gold_it->second], true, query});
  }
  return result;
}

ParametricProfile generate_profile(const World& world, const ProfileConfig& config,
                                   uint64_t seed) {
  if (config.coverage < 0.0 || config.coverage > 1.0) {
    throw std::invalid_argument("coverage must be in [0, 1]");
  }
  if (config.corruption_rate < 0.0 || config.corruption_rate > 1.0) {
    throw std::invalid_argument("corruption_rate must be in [0, 1]");
  }

  ParametricProfile profile;
  profile.seed = seed;
  profile.coverage = config.coverage;
  profile.corruption_rate = config.corruption_rate;

  const size_t known_count = static_cast<size_t>(
      std::llround(config.coverage * static_cast<double>(world.facts.size())));
  const size_t corrupt_count = static_cast<size_t>(
      std::llround(config.corruption_rate * static_cast<double>(known_count)));
  if (corrupt_count > 0 && world.entities.size() < 2) {
    throw std::invalid_argument("corruption needs at least 2 entities");
  }

  Rng rng(derive_seed(seed, "profile"));
  std::vector<size_t> order(world.facts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<size_t> known(order.begin(), order.begin() + static_cast<ptrdiff_t>(known_count));
  shuffle(known, rng);

  for (size_t i = 0; i < known.size(); ++i) {
    const Fact& f = world.facts[known[i]];
    ProfileEntry entry;
    if (i < corrupt_count) {
      entry.status = FactStatus::KnownCorrupt;
      EntityId wrong = f.object;
      while (wrong == f.object) wrong = world.entities[rng.index(world.entities.size())];
      entry.answer = wrong;
    } else {
      entry.status = FactStatus::KnownCorrect;
      entry.answer = f.object;
    }
    profile.entries.emplace(pair_key(f.subject, f.relation), std::move(entry));
  }
  return profile;
}

ParametricResult parametric_lookup(const ParametricProfile& profile, const SearchQuery& query) {
  auto it = profile.entries.find(pair_key(query.entity, query.relation));
  if (it == profile.entries.end()) return {false, {}};
  return {true, it->second.answer};
}

FactStatus profile_status(const ParametricProfile& profile, const SearchQuery& query) {
  auto it = profile.entries.find(pair_key(query.entity, query.relation));
  return it == profile.entries.end() ? FactStatus::Unknown : it->second.status;
}

namespace {

const json& require_field(const json& j, const char* field, const std::string& context) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw std::runtime_error(context + ": missing field '" + field + "'");
  }
  return *it;
}

}  // namespace

void save_world(const std::string& path, const World& world) {
  json j;
  j["seed"] = world.seed;
  j["entities"] = world.entities;
  j["relations"] = world.relations;
  json facts = json::array();
  for (const Fact& f : world.facts) {
    facts.push_back({{"s", f.subject}, {"r", f.relation}, {"o", f.object}});
  }
  j["facts"] = std::move(facts);
  write_file_atomic(path, j.dump(2) + "\n");
}

World load_world(const std::string& path) {
  const json j = json::parse(read_file(path));
  World world;
  world.seed = require_field(j, "seed", "world").get<uint64_t>();
  world.entities = require_field(j, "entities", "world").get<std::vector<std::string>>();
  world.relations = require_field(j, "relations", "world").get<std::vector<std::string>>();

  std::unordered_map<std::string, char> entity_set, relation_set;
  for (const auto& e : world.entities) {
    if (!entity_set.emplace(e, 1).second) throw std::runtime_error("world: duplicate entity " + e);
  }
  for (const auto& r : world.relations) {
    if (!relation_set.emplace(r, 1).second) {
      throw std::runtime_error("world: duplicate relation " + r);
    }
  }

  for (const json& fj : require_field(j, "facts", "world")) {
    Fact f;
    f.subject = require_field(fj, "s", "fact").get<std::string>();
    f.relation = require_field(fj, "r", "fact").get<std::string>();
    f.object = require_field(fj, "o", "fact").get<std::string>();
    if (!entity_set.count(f.subject)) throw std::runtime_error("fact references unknown entity " + f.subject);
    if (!entity_set.count(f.object)) throw std::runtime_error("fact references unknown entity " + f.object);
    if (!relation_set.count(f.relation)) {
      throw std::runtime_error("fact references unknown relation " + f.relation);
    }
    if (f.subject == f.object) {
      throw std::runtime_error("fact has identical subject and object: " + f.subject);
    }
    world.facts.push_back(std::move(f));
  }
  world.build_index();  // throws on duplicate (subject, relation)
  return world;
}

void save_questions(const std::string& path, const std::vector<Question>& questions) {
  std::string out;
  for (const Question& q : questions) {
    json hops = json::array();
    for (const QuestionHop& hop : q.hops) hops.push_back({hop.entity, hop.relation});
    json j{{"id", q.id},
           {"text", q.text},
           {"hops", std::move(hops)},
           {"gold", q.gold},
           {"hop_count", q.hop_count}};
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Question> load_questions(const std::string& path) {
  std::vector<Question> questions;
  const std::string content = read_file(path);
  size_t start = 0, line_no = 0;
  while (start < content.size()) {
    size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    std::string line = content.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const std::string ctx = "questions line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
    Question q;
    q.id = require_field(j, "id", ctx).get<std::string>();
    q.text = require_field(j, "text", ctx).get<std::string>();
    q.gold = require_field(j, "gold", ctx).get<std::string>();
    q.hop_count = require_field(j, "hop_count", ctx).get<int>();
    for (const json& hj : require_field(j, "hops", ctx)) {
      if (!hj.is_array() || hj.size() != 2) {
        throw std::runtime_error(ctx + ": each hop must be a [entity, relation] pair");
      }
      q.hops.push_back({hj[0].get<std::string>(), hj[1].get<std::string>()});
    }
    if (q.hops.empty()) throw std::runtime_error(ctx + ": empty hop chain");
    if (q.hop_count != static_cast<int>(q.hops.size())) {
      throw std::runtime_error(ctx + ": hop_count does not match hops length");
    }
    questions.push_back(std::move(q));
  }
  return questions;
}

void save_profile(const std::string& path, const ParametricProfile& profile) {
  json j;
  j["seed"] = profile.seed;
  j["coverage"] = profile.coverage;
  j["corruption_rate"] = profile.corruption_rate;

  std::vector<std::string> keys;
  keys.reserve(profile.entries.size());
  for (const auto& [key, entry] : profile.entries) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  json entries = json::array();
  for (const std::string& key : keys) {
    const ProfileEntry& entry = profile.entries.at(key);
    size_t sep = key.find('\x1f');
    entries.push_back(
        {{"s", key.substr(0, sep)},
         {"r", key.substr(sep + 1)},
         {"status", entry.status == FactStatus::KnownCorrect ? "known_correct" : "known_corrupt"},
         {"answer", entry.answer}});
  }
  j["entries"] = std::move(entries);
  write_file_atomic(path, j.dump(2) + "\n");
}

ParametricProfile load_profile(const std::string& path) {
  const json j = json::parse(read_file(path));
  ParametricProfile profile;
  profile.seed = require_field(j, "seed", "profile").get<uint64_t>();
  profile.coverage = require_field(j, "coverage", "profile").get<double>();
  profile.corruption_rate = require_field(j, "corruption_rate", "profile").get<double>();
  for (const json& ej : require_field(j, "entries", "profile")) {
    const std::string s = require_field(ej, "s", "profile entry").get<std::string>();
    const std::string r = require_field(ej, "r", "profile entry").get<std::string>();
    const std::string status = require_field(ej, "status", "profile entry").get<std::string>();
    ProfileEntry entry;
    if (status == "known_correct") {
      entry.status = FactStatus::KnownCorrect;
    } else if (status == "known_corrupt") {
      entry.status = FactStatus::KnownCorrupt;
    } else {
      throw std::runtime_error("profile entry: unknown status '" + status + "'");
    }
    entry.answer = require_field(ej, "answer", "profile entry").get<std::string>();
    if (!profile.entries.emplace(pair_key(s, r), std::move(entry)).second) {
      throw std::runtime_error("profile: duplicate entry for (" + s + ", " + r + ")");
    }
  }
  return profile;
}

}  // namespace searchbound
