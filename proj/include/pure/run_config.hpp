#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pure/eval_harness.hpp"
#include "pure/prompt_kit.hpp"

namespace pure {

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  std::string base_url;
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  bool structured_output = true;
  int timeout_s = 120;
  int max_in_flight = 0;
};

struct RunConfig {
  std::string run_id;
  std::filesystem::path history_path;
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;
  std::vector<MethodSpec> methods;
  EvalConfig eval;
  std::size_t min_interactions = 4;
  std::optional<std::size_t> max_users;
  int schema_retries = 3;
  int transport_retries = 5;
  BackendConfig backend;

  std::filesystem::path run_dir() const { return output_dir / run_id; }

  // Everything that determines results; stored in the manifest and compared on resume.
  nlohmann::json snapshot() const;

  // Re-checks cross-field constraints; throws ConfigError listing every problem.
  void validate() const;
};

// Parses a config object. Relative paths resolve against base_dir. Throws ConfigError
// carrying one diagnostic line per offending field.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pure
