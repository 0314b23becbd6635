#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace searchbound {

struct GenEnvCmd {
  std::string config_path;
  std::string out_dir;
};

struct TrainCmd {
  std::string config_path;
  std::optional<uint64_t> seed;  // overrides the config's seed
  std::string out_dir;
};

struct EvalCmd {
  std::string checkpoint_path;
  std::string questions_path;  // world.json and profile.json live next to it
  std::string out_dir;
};

struct AuditCmd {
  std::string transcripts_path;
  std::string gold_path;  // sibling world.json/profile.json enable replay
  std::string out_dir;
};

struct AblateCmd {
  std::string config_path;
  std::vector<std::string> variants;
  std::vector<uint64_t> seeds;
  std::string out_dir;
};

struct ReportCmd {
  std::string log_dir;
  std::string out_path;
};

using Command = std::variant<GenEnvCmd, TrainCmd, EvalCmd, AuditCmd, AblateCmd, ReportCmd>;

// Runs one command to completion; throws on any failure. Output directories
// are created as needed; inputs are never modified.
void execute(const Command& command);

// Full entry point: parses argv, executes, prints a one-line {"error": ...}
// to stderr on failure. Returns the process exit code (0 ok, 1 execution
// failure, 2 usage error).
int run_cli(int argc, const char* const* argv);

}  // namespace searchbound
