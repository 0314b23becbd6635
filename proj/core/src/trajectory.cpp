#include "searchbound/trajectory.hpp"

#include <array>
#include <cctype>

#include <json.hpp>

#include "searchbound/io.hpp"

namespace searchbound {

using nlohmann::json;

std::string mode_name(Mode mode) {
  return mode == Mode::SearchDisabled ? "disabled" : "enabled";
}

Mode parse_mode(const std::string& name) {
  if (name == "disabled") return Mode::SearchDisabled;
  if (name == "enabled") return Mode::SearchEnabled;
  throw std::runtime_error("unknown mode '" + name + "'");
}

int search_count(const Trajectory& t) {
  int n = 0;
  for (const Step& s : t.steps) {
    if (s.kind == StepKind::Search) ++n;
  }
  return n;
}

namespace {

struct TagInfo {
  StepKind kind;
  std::string_view open;
  std::string_view close;
};

constexpr std::array<TagInfo, 4> kTags{{
    {StepKind::Think, "<think>", "</think>"},
    {StepKind::Search, "<search>", "</search>"},
    {StepKind::Information, "<information>", "</information>"},
    {StepKind::Answer, "<answer>", "</answer>"},
}};

const TagInfo& tag_info(StepKind kind) {
  return kTags[static_cast<size_t>(kind)];
}

const char* kind_name(StepKind kind) {
  switch (kind) {
    case StepKind::Think: return "think";
    case StepKind::Search: return "search";
    case StepKind::Information: return "information";
    case StepKind::Answer: return "answer";
  }
  return "?";
}

// Scans for the first occurrence of any known tag token at or after `from`.
// Returns (offset, tag index, is_close) or offset == npos.
struct TagHit {
  size_t offset = std::string_view::npos;
  size_t tag = 0;
  bool is_close = false;
};

TagHit find_next_tag(std::string_view text, size_t from) {
  TagHit best;
  for (size_t pos = text.find('<', from); pos != std::string_view::npos;
       pos = text.find('<', pos + 1)) {
    for (size_t ti = 0; ti < kTags.size(); ++ti) {
      const TagInfo& tag = kTags[ti];
      if (text.substr(pos, tag.open.size()) == tag.open) return {pos, ti, false};
      if (text.substr(pos, tag.close.size()) == tag.close) return {pos, ti, true};
    }
  }
  return best;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

}  // namespace

Trajectory parse_transcript(std::string_view text, Mode mode, std::string question_id) {
  Trajectory t;
  t.question_id = std::move(question_id);
  t.mode = mode;

  size_t pos = 0;
  bool awaiting_information = false;
  while (true) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
    if (pos >= text.size()) break;

    if (!t.steps.empty() && t.steps.back().kind == StepKind::Answer) {
      throw ParseError(ParseErrorKind::AnswerNotTerminal, pos,
                       "content after answer step");
    }

    TagHit open = find_next_tag(text, pos);
    if (open.offset != pos || open.is_close) {
      throw ParseError(ParseErrorKind::UnknownTag, pos, "expected an opening tag");
    }
    const TagInfo& tag = kTags[open.tag];
    const StepKind kind = tag.kind;

    if (kind == StepKind::Search && mode == Mode::SearchDisabled) {
      throw ParseError(ParseErrorKind::SearchInDisabledMode, pos,
                       "search step in a search-disabled trajectory");
    }
    if (awaiting_information && kind != StepKind::Information) {
      throw ParseError(ParseErrorKind::SearchWithoutInformation, pos,
                       "search step must be followed by an information step");
    }
    if (!awaiting_information && kind == StepKind::Information) {
      throw ParseError(ParseErrorKind::StrayInformation, pos,
                       "information step without a preceding search step");
    }

    const size_t content_start = pos + tag.open.size();
    TagHit next = find_next_tag(text, content_start);
    if (next.offset == std::string_view::npos) {
      throw ParseError(ParseErrorKind::UnclosedTag, pos,
                       std::string("unclosed <") + kind_name(kind) + "> tag");
    }
    if (!next.is_close || next.tag != open.tag) {
      if (!next.is_close && next.tag == open.tag) {
        throw ParseError(ParseErrorKind::NestedTag, next.offset,
                         std::string("nested <") + kind_name(kind) + "> tag");
      }
      throw ParseError(ParseErrorKind::InterleavedTag, next.offset,
                       std::string("tag inside <") + kind_name(kind) + "> content");
    }

    Step step;
    step.kind = kind;
    step.content = std::string(text.substr(content_start, next.offset - content_start));
    t.steps.push_back(std::move(step));
    pos = next.offset + tag.close.size();
    awaiting_information = (kind == StepKind::Search);
  }

  if (awaiting_information) {
    throw ParseError(ParseErrorKind::SearchWithoutInformation, pos,
                     "transcript ends after a search step; missing information/answer");
  }
  if (!t.steps.empty() && t.steps.back().kind == StepKind::Answer) {
    t.predicted_answer = t.steps.back().content;
  }
  return t;
}

std::string render_transcript(const Trajectory& t) {
  std::string out;
  for (const Step& s : t.steps) {
    const TagInfo& tag = tag_info(s.kind);
    out += tag.open;
    out += s.content;
    out += tag.close;
  }
  return out;
}

void validate_trajectory(const Trajectory& t) {
  bool awaiting_information = false;
  for (size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    if (s.kind == StepKind::Answer && i + 1 != t.steps.size()) {
      throw std::invalid_argument("answer step must be terminal");
    }
    if (s.kind == StepKind::Search && t.mode == Mode::SearchDisabled) {
      throw std::invalid_argument("search step in a search-disabled trajectory");
    }
    if (awaiting_information && s.kind != StepKind::Information) {
      throw std::invalid_argument("search step not followed by an information step");
    }
    if (!awaiting_information && s.kind == StepKind::Information) {
      throw std::invalid_argument("information step without a preceding search");
    }
    awaiting_information = (s.kind == StepKind::Search);
    for (const TagInfo& tag : kTags) {
      if (s.content.find(tag.open) != std::string::npos ||
          s.content.find(tag.close) != std::string::npos) {
        throw std::invalid_argument("step content contains a reserved tag");
      }
    }
  }
  if (awaiting_information) {
    throw std::invalid_argument("trajectory ends after a search step");
  }
  const bool ends_with_answer =
      !t.steps.empty() && t.steps.back().kind == StepKind::Answer;
  if (ends_with_answer != t.predicted_answer.has_value()) {
    throw std::invalid_argument("predicted_answer must mirror the terminal answer step");
  }
  if (ends_with_answer && *t.predicted_answer != t.steps.back().content) {
    throw std::invalid_argument("predicted_answer differs from the answer step content");
  }
}

std::string encode_query(const SearchQuery& q) {
  return q.entity + "|" + q.relation;
}

std::optional<SearchQuery> decode_query(const std::string& content) {
  size_t sep = content.find('|');
  if (sep == std::string::npos || sep == 0 || sep + 1 >= content.size()) return std::nullopt;
  if (content.find('|', sep + 1) != std::string::npos) return std::nullopt;
  return SearchQuery{content.substr(0, sep), content.substr(sep + 1)};
}

std::string encode_evidence(std::span<const EvidenceItem> items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ';';
    const Fact& f = items[i].fact;
    out += f.subject;
    out += '|';
    out += f.relation;
    out += '|';
    out += f.object;
  }
  return out;
}

std::optional<std::vector<Fact>> decode_evidence(const std::string& content) {
  std::vector<Fact> facts;
  if (content.empty()) return facts;
  size_t start = 0;
  while (start <= content.size()) {
    size_t end = content.find(';', start);
    if (end == std::string::npos) end = content.size();
    const std::string item = content.substr(start, end - start);
    size_t a = item.find('|');
    if (a == std::string::npos) return std::nullopt;
    size_t b = item.find('|', a + 1);
    if (b == std::string::npos || item.find('|', b + 1) != std::string::npos) {
      return std::nullopt;
    }
    Fact f{item.substr(0, a), item.substr(a + 1, b - a - 1), item.substr(b + 1)};
    if (f.subject.empty() || f.relation.empty() || f.object.empty()) return std::nullopt;
    facts.push_back(std::move(f));
    if (end == content.size()) break;
    start = end + 1;
  }
  return facts;
}

void save_transcripts(const std::string& path, std::span<const Trajectory> trajectories) {
  std::string out;
  for (const Trajectory& t : trajectories) {
    json j{{"question_id", t.question_id},
           {"mode", mode_name(t.mode)},
           {"transcript", render_transcript(t)}};
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<TranscriptRecord> load_transcripts(const std::string& path) {
  std::vector<TranscriptRecord> records;
  const std::string content = read_file(path);
  size_t start = 0, line_no = 0;
  while (start < content.size()) {
    size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const std::string ctx = "transcripts line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
    auto get = [&](const char* field) -> const json& {
      auto it = j.find(field);
      if (it == j.end()) throw std::runtime_error(ctx + ": missing field '" + field + "'");
      return *it;
    };
    TranscriptRecord rec;
    const Mode mode = parse_mode(get("mode").get<std::string>());
    const std::string text = get("transcript").get<std::string>();
    try {
      rec.trajectory = parse_transcript(text, mode, get("question_id").get<std::string>());
    } catch (const ParseError& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
    if (auto it = j.find("redundant_search_indices"); it != j.end()) {
      rec.redundant_search_indices = it->get<std::vector<int>>();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace searchbound
