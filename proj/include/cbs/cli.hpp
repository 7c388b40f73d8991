#pragma once

// Command-line front end: strict configuration parsing, the run driver for
// every subcommand and reproduce preset, and the output conventions (CSV
// profiles, JSON summaries, a manifest with SHA-256 checksums).
//
// Inputs and outputs: angles in mrad, lengths in wavelengths unless the
// config carries a `units` section.

#include "cbs/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cbs::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kCheckpointDir = "checkpoints";

/// Configuration error attributed to one key.
class KeyError : public ConfigError {
 public:
  KeyError(std::string key, const std::string& message)
      : ConfigError(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Output file operations failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;  // lineshape | phasescreen | rmt | fullwave | fisher | reproduce
  std::string preset;   // empty when none
  Json params;          // resolved, lengths in lambda, angles in mrad
  std::uint64_t seed = 0;
  std::uint64_t realizations = 0;
  int workers = 0;  // 0 keeps the OpenMP default
  fs::path out = "cbs_out";
  bool resume = false;

  /// What the manifest stores; feeding it back through parse_config gives
  /// the same RunConfig up to out, workers and resume.
  Json snapshot() const;
};

const std::vector<std::string>& command_names();
/// Allowed --preset values for a command (empty when presets do not apply).
std::vector<std::string> preset_names(const std::string& command);

/// Keys accepted by a command, in table order.
std::vector<std::string> param_keys(const std::string& command);

/// Reads a JSON config. A manifest is accepted and yields its config snapshot.
Json load_config_file(const fs::path& file);

/// Merges file values, then overrides (same keys, values may be strings as
/// typed on the command line), applies units and defaults, and validates.
/// `command` may be empty when the file names it.
RunConfig parse_config(const std::string& command, const Json& file, const Json& overrides);

struct RunResult {
  fs::path manifest;
  std::vector<std::string> outputs;  // relative to the output directory
  Json summary;
};

/// Executes the run and writes every artifact plus the manifest.
RunResult run(const RunConfig& cfg);

/// Full command-line entry: parses, runs and, on failure, prints the error
/// JSON on stdout (also written to <out>/error.json). Returns the exit status.
int main(int argc, char** argv);

/// Exit status and error document for an in-flight exception.
struct ErrorReport {
  int status = 1;
  Json doc;
};
ErrorReport describe_current_exception(const std::string& command);

std::string sha256_file(const fs::path& file);

/// Mismatches between a manifest and the files it lists; empty when all
/// checksums verify.
std::vector<std::string> verify_manifest(const fs::path& dir);

struct CsvSchema {
  std::string name;
  std::vector<std::string> columns;
};
/// Every CSV layout the tool writes.
const std::vector<CsvSchema>& csv_schemas();

/// Parses a CSV file, checks the header against a known schema and that
/// every row has numeric fields of the right count. Returns the schema name;
/// throws ConfigError otherwise.
std::string check_csv(const fs::path& file);

std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace cbs::cli
