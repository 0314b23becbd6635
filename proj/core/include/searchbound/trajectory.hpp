#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "searchbound/env.hpp"

namespace searchbound {

enum class Mode { SearchDisabled, SearchEnabled };

std::string mode_name(Mode mode);             // "disabled" / "enabled"
Mode parse_mode(const std::string& name);

enum class StepKind { Think, Search, Information, Answer };

struct Step {
  StepKind kind = StepKind::Think;
  std::string content;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::string question_id;
  Mode mode = Mode::SearchEnabled;
  std::vector<Step> steps;
  std::optional<std::string> predicted_answer;  // mirrors a terminal Answer step
  bool operator==(const Trajectory&) const = default;
};

int search_count(const Trajectory& t);

enum class ParseErrorKind {
  UnknownTag,
  UnclosedTag,
  NestedTag,
  InterleavedTag,
  AnswerNotTerminal,
  SearchWithoutInformation,
  StrayInformation,
  SearchInDisabledMode,
};

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, size_t offset, const std::string& message)
      : std::runtime_error(message + " at offset " + std::to_string(offset)),
        kind(kind),
        offset(offset) {}
  ParseErrorKind kind;
  size_t offset;
};

// Strict parser for the tagged transcript grammar:
//   transcript := (think | search information)* answer?
// Content is kept verbatim; whitespace between steps is permitted and
// discarded; any known tag inside a content span is an error.
Trajectory parse_transcript(std::string_view text, Mode mode, std::string question_id = "");

// Canonical form: steps concatenated with nothing between tags.
std::string render_transcript(const Trajectory& t);

// Throws std::invalid_argument when a trajectory breaks a structural
// invariant (non-terminal answer, search in disabled mode, search without
// information, predicted_answer mismatch).
void validate_trajectory(const Trajectory& t);

std::string encode_query(const SearchQuery& q);                      // "entity|relation"
std::optional<SearchQuery> decode_query(const std::string& content);

std::string encode_evidence(std::span<const EvidenceItem> items);    // "s|r|o;s|r|o"
std::optional<std::vector<Fact>> decode_evidence(const std::string& content);

struct TranscriptRecord {
  Trajectory trajectory;
  // Optional audit annotation: indices (among search steps, 0-based) deemed
  // redundant by an external judge.
  std::optional<std::vector<int>> redundant_search_indices;
};

void save_transcripts(const std::string& path, std::span<const Trajectory> trajectories);
std::vector<TranscriptRecord> load_transcripts(const std::string& path);

}  // namespace searchbound
