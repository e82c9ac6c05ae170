#include "pure/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "pure/dataset.hpp"
#include "pure/errors.hpp"
#include "pure/run_store.hpp"
#include "pure/tokenizer.hpp"

namespace pure {

using nlohmann::json;

std::string_view to_string(SchemaId id) {
  switch (id) {
    case SchemaId::Extract:
      return "extract";
    case SchemaId::UpdateList:
      return "update_list";
    case SchemaId::Rank20:
      return "rank20";
    case SchemaId::FreeRank:
      return "free_rank";
  }
  return "unknown";
}

SchemaId schema_from_string(std::string_view name) {
  for (auto id : {SchemaId::Extract, SchemaId::UpdateList, SchemaId::Rank20, SchemaId::FreeRank}) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("unknown schema '" + std::string(name) + "'");
}

std::string_view schema_instruction(SchemaId schema) {
  switch (schema) {
    case SchemaId::Extract:
      return R"(Respond with a JSON object only, using this schema: {"likes": [string], "dislikes": [string], "key_features": [string]})";
    case SchemaId::UpdateList:
      return R"(Respond with a JSON object only, using this schema: {"items": [string]})";
    case SchemaId::Rank20:
      return R"(Respond with a JSON object only, using this schema: {"ranking": [string x 20]}, where each entry is a candidate number from "1" to "20" and every candidate appears exactly once.)";
    case SchemaId::FreeRank:
      return R"(Respond with a JSON object only, using this schema: {"ranking": [string]})";
  }
  return "";
}

namespace {

std::optional<std::string> check_string_array(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) return std::string("missing field \"") + field + "\"";
  if (!it->is_array()) return std::string("field \"") + field + "\" is not an array";
  for (const auto& v : *it) {
    if (!v.is_string()) return std::string("field \"") + field + "\" contains a non-string entry";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_schema(SchemaId schema, const json& value) {
  if (!value.is_object()) return "response is not a JSON object";
  switch (schema) {
    case SchemaId::Extract:
      for (const char* f : {"likes", "dislikes", "key_features"}) {
        if (auto err = check_string_array(value, f)) return err;
      }
      return std::nullopt;
    case SchemaId::UpdateList:
      return check_string_array(value, "items");
    case SchemaId::Rank20: {
      if (auto err = check_string_array(value, "ranking")) return err;
      auto n = value.at("ranking").size();
      if (n != kSlateSize) {
        return "field \"ranking\" has " + std::to_string(n) + " entries, expected " + std::to_string(kSlateSize);
      }
      return std::nullopt;
    }
    case SchemaId::FreeRank:
      return check_string_array(value, "ranking");
  }
  return "unknown schema";
}

std::optional<json> extract_json_object(std::string_view text) {
  auto first = text.find('{');
  auto last = text.rfind('}');
  if (first == std::string_view::npos || last == std::string_view::npos || last < first) return std::nullopt;
  json value = json::parse(text.substr(first, last - first + 1), nullptr, false);
  if (value.is_discarded() || !value.is_object()) return std::nullopt;
  if (auto it = value.find("ranking"); it != value.end() && it->is_array()) {
    for (auto& v : *it) {
      if (v.is_number_integer()) v = std::to_string(v.get<std::int64_t>());
    }
  }
  return value;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options, ResponseCache* cache)
    : backend_(std::move(backend)), options_(std::move(options)), cache_(cache) {
  if (!backend_) throw ConfigError("gateway requires a backend");
  if (options_.schema_retries < 1) throw ConfigError("schema_retries must be >= 1");
  if (options_.transport_retries < 0) throw ConfigError("transport_retries must be >= 0");
  if (!is_registered_tokenizer(options_.tokenizer_id)) {
    throw ConfigError("unknown tokenizer '" + options_.tokenizer_id + "'");
  }
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

BackendReply Gateway::send_with_retry(const ChatRequest& request) {
  {
    std::unique_lock lock(flight_mutex_);
    if (options_.max_in_flight > 0) {
      flight_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    }
    ++in_flight_;
  }
  struct Release {
    Gateway* g;
    ~Release() {
      std::lock_guard lock(g->flight_mutex_);
      --g->in_flight_;
      g->flight_cv_.notify_one();
    }
  } release{this};

  thread_local std::minstd_rand jitter_rng{std::random_device{}()};
  std::string last_error;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    ++backend_calls_;
    try {
      return backend_->send(request);
    } catch (const TransportError& e) {
      ++transport_failures_;
      last_error = e.what();
    }
    if (attempt == options_.transport_retries) break;
    double scale = std::ldexp(1.0, attempt);
    auto base = std::min<double>(static_cast<double>(options_.backoff_cap.count()),
                                 static_cast<double>(options_.backoff_base.count()) * scale);
    std::uniform_real_distribution<double> jitter(0.5, 1.0);
    options_.sleeper(std::chrono::milliseconds(static_cast<std::int64_t>(base * jitter(jitter_rng))));
  }
  throw BackendUnavailable("backend " + backend_->backend_id() + " unavailable after " +
                           std::to_string(options_.transport_retries + 1) + " attempts: " + last_error);
}

ChatOutcome Gateway::complete_json(const ChatRequest& request) {
  if (request.user_text.empty()) throw ContractViolation("ChatRequest.user_text must be non-empty");
  if (observer_) observer_(request);

  const std::string prompt_text = request.system_text + "\n" + request.user_text;
  std::optional<CacheKey> key;
  if (cache_ != nullptr) {
    key = make_cache_key(backend_->backend_id(), backend_->model_id(), request.temperature, request.schema,
                         prompt_text, options_.prompt_version);
    if (auto hit = cache_->get(*key)) {
      ++cache_hits_;
      hit->from_cache = true;
      return *hit;
    }
  }

  ChatOutcome outcome;
  ChatRequest wire = request;
  std::string violation;
  for (int attempt = 1; attempt <= options_.schema_retries; ++attempt) {
    BackendReply reply = send_with_retry(wire);
    const std::int64_t counted =
        count_tokens(wire.system_text, options_.tokenizer_id) + count_tokens(wire.user_text, options_.tokenizer_id);
    const std::int64_t prompt_tokens = reply.prompt_tokens.value_or(counted);
    if (reply.prompt_tokens) {
      reported_prompt_tokens_ += *reply.prompt_tokens;
      fallback_prompt_tokens_ += counted;
    }
    if (attempt == 1) outcome.prompt_tokens = prompt_tokens;
    outcome.output_tokens += reply.output_tokens.value_or(count_tokens(reply.text, options_.tokenizer_id));
    outcome.raw_text = reply.text;
    outcome.attempts = attempt;

    auto value = extract_json_object(reply.text);
    std::optional<std::string> err =
        value ? validate_schema(request.schema, *value) : std::optional<std::string>("response is not a JSON object");
    if (!err) {
      outcome.parsed_value = std::move(*value);
      if (cache_ != nullptr) cache_->put(*key, outcome);
      return outcome;
    }
    violation = *err;
    if (attempt < options_.schema_retries) {
      ++schema_repairs_;
      wire.user_text = request.user_text + "\n\nYour previous reply was invalid: " + violation + ".\n" +
                       std::string(schema_instruction(request.schema));
    }
  }
  ++parse_exhausted_;
  throw ParseExhausted("schema " + std::string(to_string(request.schema)) + " still invalid after " +
                           std::to_string(options_.schema_retries) + " attempts: " + violation,
                       outcome.raw_text, options_.schema_retries);
}

GatewayCounters Gateway::counters() const {
  GatewayCounters c;
  c.backend_calls = backend_calls_.load();
  c.transport_failures = transport_failures_.load();
  c.schema_repairs = schema_repairs_.load();
  c.parse_exhausted = parse_exhausted_.load();
  c.cache_hits = cache_hits_.load();
  c.reported_prompt_tokens = reported_prompt_tokens_.load();
  c.fallback_prompt_tokens = fallback_prompt_tokens_.load();
  return c;
}

}  // namespace pure
