#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace searchbound {

using EntityId = std::string;
using RelationId = std::string;

struct Fact {
  EntityId subject;
  RelationId relation;
  EntityId object;
  bool operator==(const Fact&) const = default;
};

struct WorldConfig {
  int entity_count = 50;
  int relation_count = 12;
  double fact_density = 0.3;  // fraction of (entity, relation) pairs carrying a fact
  int max_chain_depth = 3;
};

// Knowledge graph with functional relations: at most one fact per
// (subject, relation) pair, and subject != object for every fact.
struct World {
  uint64_t seed = 0;
  std::vector<EntityId> entities;
  std::vector<RelationId> relations;
  std::vector<Fact> facts;

  // Derived lookups, rebuilt by generate_world/load_world.
  std::unordered_map<std::string, size_t> fact_by_pair;
  std::unordered_map<std::string, std::vector<size_t>> facts_by_subject;
  std::unordered_map<std::string, std::vector<size_t>> facts_by_relation;

  void build_index();
  const Fact* find_fact(const EntityId& subject, const RelationId& relation) const;
  bool has_entity(const EntityId& e) const;
  bool has_relation(const RelationId& r) const;
};

std::string pair_key(const EntityId& subject, const RelationId& relation);

World generate_world(const WorldConfig& config, uint64_t seed);

struct QuestionHop {
  EntityId entity;
  RelationId relation;
  bool operator==(const QuestionHop&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  std::vector<QuestionHop> hops;
  EntityId gold;
  int hop_count = 0;
};

struct QuestionConfig {
  int count = 300;
  std::map<int, double> hop_distribution = {{1, 0.5}, {2, 0.3}, {3, 0.2}};
};

std::vector<Question> generate_questions(const World& world, const QuestionConfig& config,
                                         uint64_t seed);

// Follows the hop chain through world facts; empty optional when a hop is
// missing. Used to validate generated questions against their gold answer.
std::optional<EntityId> follow_chain(const World& world, const Question& q);

struct SearchQuery {
  EntityId entity;
  RelationId relation;
  bool operator==(const SearchQuery&) const = default;
};

struct EvidenceItem {
  Fact fact;
  bool is_gold = false;
  SearchQuery source_query;
};

struct RetrievalNoise {
  double p_miss = 0.0;  // per-call probability that the gold fact is dropped
};

// Top-k retrieval: gold fact (unless missing or dropped by noise) plus
// distractors sharing the query's subject or relation.
std::vector<EvidenceItem> retrieve(const World& world, const SearchQuery& query, int k,
                                   const RetrievalNoise& noise, uint64_t seed);

enum class FactStatus { KnownCorrect, KnownCorrupt, Unknown };

struct ProfileEntry {
  FactStatus status = FactStatus::Unknown;
  EntityId answer;  // true object for KnownCorrect, a wrong one for KnownCorrupt
};

struct ProfileConfig {
  double coverage = 0.6;         // fraction of facts with status != Unknown
  double corruption_rate = 0.15; // fraction of known facts that are corrupt
};

struct ParametricProfile {
  uint64_t seed = 0;
  double coverage = 0.0;
  double corruption_rate = 0.0;
  std::unordered_map<std::string, ProfileEntry> entries;  // keyed by pair_key
};

ParametricProfile generate_profile(const World& world, const ProfileConfig& config,
                                   uint64_t seed);

struct ParametricResult {
  bool known = false;
  EntityId answer;
};

// What the policy's internal knowledge says about a query. Corrupt entries
// return their wrong object; the caller cannot tell correct from corrupt.
ParametricResult parametric_lookup(const ParametricProfile& profile, const SearchQuery& query);

FactStatus profile_status(const ParametricProfile& profile, const SearchQuery& query);

void save_world(const std::string& path, const World& world);
World load_world(const std::string& path);
void save_questions(const std::string& path, const std::vector<Question>& questions);
std::vector<Question> load_questions(const std::string& path);
void save_profile(const std::string& path, const ParametricProfile& profile);
ParametricProfile load_profile(const std::string& path);

}  // namespace searchbound
