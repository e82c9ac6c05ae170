#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pure/llm_gateway.hpp"
#include "pure/profile_engine.hpp"

namespace pure {

inline constexpr std::string_view kCacheDigestAlgorithm = "sha256/len-prefixed-v1";

struct CacheKey {
  std::string digest;  // lowercase hex sha256
  bool operator==(const CacheKey&) const = default;
};

// Digest over length-prefixed (backend_id, model_id, temperature, schema_id, prompt_text, prompt_version).
CacheKey make_cache_key(std::string_view backend_id, std::string_view model_id, double temperature,
                        SchemaId schema, std::string_view prompt_text, std::string_view prompt_version);

// Content-addressed response cache: <dir>/<aa>/<digest>.json, one JSON record per file.
// Safe for concurrent readers and writers across threads and processes; first write wins.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatOutcome> get(const CacheKey& key);
  void put(const CacheKey& key, const ChatOutcome& outcome);

  std::int64_t corrupt_entries() const { return corrupt_.load(); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const CacheKey& key) const;

  std::filesystem::path dir_;
  std::atomic<std::int64_t> corrupt_{0};
};

// Append-only line-delimited JSON files, one per user, under a directory.
// A torn final line (crash mid-write) is ignored on read and trimmed on the next append.
class ShardedLog {
 public:
  explicit ShardedLog(std::filesystem::path dir);

  void append(const std::string& user_id, const nlohmann::json& record);
  std::vector<nlohmann::json> read(const std::string& user_id) const;
  void reset(const std::string& user_id);
  std::filesystem::path path_for(const std::string& user_id) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

enum class CheckpointStatus { Ok, Absent, Gap };

struct LoadedCheckpoint {
  CheckpointStatus status = CheckpointStatus::Absent;
  Profile profile;  // valid when status == Ok
};

// Profile checkpoints {user_id, version, likes, dislikes, features}.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path dir) : log_(std::move(dir)) {}

  // Versions must strictly increase per user; throws ContractViolation otherwise.
  void checkpoint_profile(const std::string& user_id, int version, const Profile& profile);

  // Highest stored version (at most max_version when given). Versions must run 1,2,3,...
  // without holes; a hole yields status Gap and the caller recomputes the user.
  LoadedCheckpoint load_checkpoint(const std::string& user_id, std::optional<int> max_version = std::nullopt) const;

  void reset(const std::string& user_id) { log_.reset(user_id); }

 private:
  ShardedLog log_;
};

// Run manifest: <run_dir>/manifest_<run_id>.jsonl with "start"/"resume" and "finish" records.
class ManifestWriter {
 public:
  ManifestWriter(std::filesystem::path path) : path_(std::move(path)) {}

  void write_start(const nlohmann::json& record, bool resumed);
  void write_finish(const nlohmann::json& counters);
  std::vector<nlohmann::json> read() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void append(const nlohmann::json& record);
  std::filesystem::path path_;
};

std::string utc_timestamp();

// Appends one line, first trimming any torn (unterminated) tail.
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace pure
