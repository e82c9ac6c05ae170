#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

namespace pure {

class ResponseCache;

enum class SchemaId { Extract, UpdateList, Rank20, FreeRank };

std::string_view to_string(SchemaId id);
// Throws ConfigError for an unknown name.
SchemaId schema_from_string(std::string_view name);

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  SchemaId schema = SchemaId::Rank20;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct ChatOutcome {
  nlohmann::json parsed_value;
  std::string raw_text;
  std::int64_t prompt_tokens = 0;
  std::int64_t output_tokens = 0;
  int attempts = 1;
  bool from_cache = false;

  bool operator==(const ChatOutcome& o) const {
    return parsed_value == o.parsed_value && raw_text == o.raw_text && prompt_tokens == o.prompt_tokens &&
           output_tokens == o.output_tokens && attempts == o.attempts;
  }
};

// What a backend hands back for one wire call.
struct BackendReply {
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> output_tokens;
};

// Raised by backends for retryable transport failures (timeouts, 5xx, refused connections).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply send(const ChatRequest& request) = 0;
  virtual std::string backend_id() const = 0;
  virtual std::string model_id() const = 0;
};

// Schema check of an already-parsed value. Returns the violation, or nullopt when valid.
std::optional<std::string> validate_schema(SchemaId schema, const nlohmann::json& value);

// Pulls the first JSON object out of model text (tolerates code fences and chatter)
// and coerces integer ranking labels to strings. nullopt when nothing parses.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

// Compact schema description appended to prompts and repair requests.
std::string_view schema_instruction(SchemaId schema);

struct GatewayOptions {
  int schema_retries = 3;
  int transport_retries = 5;
  std::chrono::milliseconds backoff_base{250};
  std::chrono::milliseconds backoff_cap{8000};
  std::string tokenizer_id = "whitespace";
  std::string prompt_version;
  int max_in_flight = 0;  // 0 = unbounded
  std::function<void(std::chrono::milliseconds)> sleeper;  // defaults to this_thread::sleep_for
};

struct GatewayCounters {
  std::int64_t backend_calls = 0;
  std::int64_t transport_failures = 0;
  std::int64_t schema_repairs = 0;
  std::int64_t parse_exhausted = 0;
  std::int64_t cache_hits = 0;
  std::int64_t reported_prompt_tokens = 0;  // backend usage, when reported
  std::int64_t fallback_prompt_tokens = 0;  // tokenizer count of the same prompts
};

// Thread-safe front door to a backend: caching, schema repair, transport retry.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options, ResponseCache* cache = nullptr);

  // Throws ParseExhausted or BackendUnavailable.
  ChatOutcome complete_json(const ChatRequest& request);

  // Called with every request before the cache lookup. Set before concurrent use.
  void set_request_observer(std::function<void(const ChatRequest&)> observer) { observer_ = std::move(observer); }

  GatewayCounters counters() const;
  const GatewayOptions& options() const { return options_; }
  const Backend& backend() const { return *backend_; }

 private:
  BackendReply send_with_retry(const ChatRequest& request);

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  ResponseCache* cache_;
  std::function<void(const ChatRequest&)> observer_;

  std::mutex flight_mutex_;
  std::condition_variable flight_cv_;
  int in_flight_ = 0;

  std::atomic<std::int64_t> backend_calls_{0};
  std::atomic<std::int64_t> transport_failures_{0};
  std::atomic<std::int64_t> schema_repairs_{0};
  std::atomic<std::int64_t> parse_exhausted_{0};
  std::atomic<std::int64_t> cache_hits_{0};
  std::atomic<std::int64_t> reported_prompt_tokens_{0};
  std::atomic<std::int64_t> fallback_prompt_tokens_{0};
};

}  // namespace pure
