#pragma once

#include <chrono>
#include <nlohmann/json.hpp>
#include <string>

#include "pure/llm_gateway.hpp"

namespace pure {

struct HttpBackendOptions {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;   // empty = no Authorization header
  bool structured_output = true;  // send response_format json_schema
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat-completions client: POST {base_url}/chat/completions.
// Network failures, 408/429 and 5xx raise TransportError (retried by the gateway);
// any other non-2xx status raises BackendUnavailable.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  BackendReply send(const ChatRequest& request) override;
  std::string backend_id() const override { return "http:" + options_.base_url; }
  std::string model_id() const override { return options_.model; }

  // Request body for one call; exposed for tests.
  nlohmann::json request_body(const ChatRequest& request) const;

 private:
  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// JSON Schema sent through response_format for each schema id.
nlohmann::json json_schema_for(SchemaId schema);

}  // namespace pure
