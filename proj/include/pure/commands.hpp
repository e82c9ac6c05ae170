#pragma once

#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>

#include "pure/llm_gateway.hpp"
#include "pure/run_config.hpp"

namespace pure {

// Exit-code contract shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

struct IngestSummary {
  std::size_t review_lines = 0;
  std::size_t reviews_skipped = 0;
  std::size_t metadata_entries = 0;
  std::size_t metadata_skipped = 0;
  std::size_t dropped_no_metadata = 0;
  std::size_t users = 0;
  std::size_t users_excluded = 0;  // below min_interactions
  std::size_t items = 0;
  std::size_t interactions = 0;
  std::size_t continuous_sessions = 0;  // sum over users of max(0, k_u - first_target + 1)
  std::size_t oneshot_sessions = 0;
  std::string output_digest;

  nlohmann::json to_json() const;
};

// Writes the normalized history file and <out>.summary.json. Throws IngestError.
IngestSummary cmd_ingest(const std::filesystem::path& reviews_path, const std::filesystem::path& metadata_path,
                         const std::filesystem::path& out_path, std::size_t min_interactions = 4,
                         std::size_t first_target_index = 4);

// Executes (or resumes) the configured run. `backend` overrides the configured one.
// Returns an exit code; diagnostics go to `log`.
int cmd_run(const RunConfig& config, std::ostream& log, std::shared_ptr<Backend> backend = nullptr);

// Read-only renderings of a finished (or partial) run.
int cmd_report(const std::filesystem::path& output_dir, const std::string& run_id, std::ostream& out,
               std::ostream& log, bool csv = false);
int cmd_plot_data(const std::filesystem::path& output_dir, const std::string& run_id, std::ostream& out,
                  std::ostream& log);

std::shared_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace pure
