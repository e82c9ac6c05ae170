#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pure/dataset.hpp"
#include "pure/llm_gateway.hpp"
#include "pure/prompt_kit.hpp"
#include "pure/ranking.hpp"
#include "pure/run_store.hpp"

namespace pure {

enum class EvalMode { Continuous, OneShot };

std::string_view to_string(EvalMode mode);
EvalMode eval_mode_from_string(std::string_view name);

struct EvalConfig {
  std::uint64_t run_seed = 0;
  std::size_t first_target_index = 4;  // 1-based; 5 gives the "predict t+1 for 4 <= t" reading
  EvalMode mode = EvalMode::Continuous;
  int updater_stride = 1;
  bool extractor_batch = false;  // re-extract all reviews to date each session
  int workers = 1;
  int tradeoff_k = 10;
  std::string tokenizer_id = "whitespace";
};

// Which session the calling thread is working on; empty outside the harness.
struct SessionContext {
  std::string user_id;
  std::size_t target_index = 0;
};
std::optional<SessionContext> current_session();

struct SessionResult {
  std::string user_id;
  std::size_t target_index = 0;
  MethodSpec method;
  Ranking ranking;
  std::map<int, double> ndcg;  // k -> score
  std::int64_t recommender_prompt_tokens = 0;
  std::int64_t extractor_tokens = 0;
  std::int64_t updater_tokens = 0;
  int parse_fallbacks = 0;
  int profile_conflicts = 0;
  std::string truth_item_id;

  bool operator==(const SessionResult&) const = default;

  nlohmann::json to_json() const;
  static SessionResult from_json(const nlohmann::json& j);
};

struct MetricsRow {
  MethodSpec method;
  std::map<int, double> ndcg_x100;  // macro: per-user session mean, then mean over users
  double mean_input_tokens = 0;     // flat mean over sessions
  double hallucination_rate = 0;    // sessions with at least one out-of-slate label
  double repaired_rate = 0;
  double fallback_rate = 0;
  std::size_t n_users = 0;
  std::size_t n_sessions = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;  // method-grid order
};

enum class Bucket { Short, Middle, Long };
std::string_view to_string(Bucket b);

struct BucketAssignment {
  std::map<Bucket, std::vector<std::string>> users;
  std::size_t excluded = 0;  // users at or above 2000 review tokens
};

struct TradeoffRow {
  Bucket bucket = Bucket::Short;
  MethodSpec method;
  double ndcg_x100 = 0;
  double mean_input_tokens = 0;
  std::size_t n_users = 0;
};

// Session logs and profile checkpoints for one method, under a run directory.
struct MethodStorage {
  MethodStorage(const std::filesystem::path& sessions_dir, const std::filesystem::path& checkpoints_dir)
      : sessions(sessions_dir), checkpoints(checkpoints_dir) {}
  ShardedLog sessions;
  CheckpointStore checkpoints;
};

// Resumable state of one run: <run_dir>/sessions_<run_id>/<method>/ and checkpoints_<run_id>/<method>/.
class RunStorage {
 public:
  RunStorage(std::filesystem::path run_dir, std::string run_id);
  MethodStorage& for_method(const MethodSpec& method);

 private:
  std::filesystem::path run_dir_;
  std::string run_id_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<MethodStorage>> by_method_;
};

// Sessions for targets first_target_index..k_u. Already-logged sessions in `storage`
// are reused and the profile resumes from its checkpoint.
std::vector<SessionResult> run_user_continuous(const UserHistory& history, const MethodSpec& method,
                                               Gateway& gateway, const ItemPool& pool, const EvalConfig& config,
                                               MethodStorage* storage = nullptr);

// One session predicting the last interaction from the k_u - 1 before it.
SessionResult run_user_oneshot(const UserHistory& history, const MethodSpec& method, Gateway& gateway,
                               const ItemPool& pool, const EvalConfig& config, MethodStorage* storage = nullptr);

// Throws ContractViolation on empty input.
MetricsTable aggregate(const std::vector<SessionResult>& results);

BucketAssignment bucket_users(const std::vector<UserHistory>& histories,
                              std::string_view tokenizer_id = "whitespace");

std::vector<TradeoffRow> tradeoff_table(const std::vector<SessionResult>& results, const BucketAssignment& buckets,
                                        int k);

struct MatrixReport {
  MetricsTable table;
  std::vector<TradeoffRow> tradeoff;
  BucketAssignment buckets;
  std::vector<SessionResult> results;
  std::size_t users_skipped = 0;  // too short for the configured first target
};

// Runs every method over every eligible user on a worker pool. The first fatal
// error (e.g. BackendUnavailable) stops scheduling and is rethrown after the
// in-flight users finish; completed work stays in `storage` for resumption.
MatrixReport run_matrix(const std::vector<UserHistory>& histories, const std::vector<MethodSpec>& methods,
                        Gateway& gateway, const EvalConfig& config, RunStorage* storage = nullptr,
                        const ItemPool* pool = nullptr);

inline constexpr std::string_view kMetricsCsvHeader =
    "method_family,use_reviews,use_extractor,use_updater,k,ndcg_x100,mean_input_tokens,"
    "hallucination_rate,repaired_rate,fallback_rate,n_users,n_sessions";
inline constexpr std::string_view kTradeoffCsvHeader = "bucket,method,ndcg_x100,mean_input_tokens";

void write_metrics_csv(std::ostream& out, const MetricsTable& table);
void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffRow>& rows);

// Fixed-width text renderings: N@k per method, and the component grid with |T|.
std::string render_ndcg_table(const MetricsTable& table);
std::string render_component_table(const MetricsTable& table);

}  // namespace pure
