#include "pure/http_backend.hpp"

#include <httplib.h>

#include "pure/dataset.hpp"
#include "pure/errors.hpp"

namespace pure {

using nlohmann::json;

namespace {

json string_array() { return json{{"type", "array"}, {"items", {{"type", "string"}}}}; }

}  // namespace

json json_schema_for(SchemaId schema) {
  json props;
  json required = json::array();
  switch (schema) {
    case SchemaId::Extract:
      props = {{"likes", string_array()}, {"dislikes", string_array()}, {"key_features", string_array()}};
      required = {"likes", "dislikes", "key_features"};
      break;
    case SchemaId::UpdateList:
      props = {{"items", string_array()}};
      required = {"items"};
      break;
    case SchemaId::Rank20: {
      json arr = string_array();
      arr["minItems"] = kSlateSize;
      arr["maxItems"] = kSlateSize;
      props = {{"ranking", arr}};
      required = {"ranking"};
      break;
    }
    case SchemaId::FreeRank:
      props = {{"ranking", string_array()}};
      required = {"ranking"};
      break;
  }
  return json{{"type", "object"}, {"properties", props}, {"required", required}, {"additionalProperties", false}};
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  auto scheme_end = options_.base_url.find("://");
  if (options_.base_url.empty() || scheme_end == std::string::npos) {
    throw ConfigError("http backend base_url must look like http(s)://host[:port][/path], got '" +
                      options_.base_url + "'");
  }
  if (options_.model.empty()) throw ConfigError("http backend requires a model name");
  auto path_start = options_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = options_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : options_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

json HttpBackend::request_body(const ChatRequest& request) const {
  json body{{"model", options_.model},
            {"messages",
             json::array({json{{"role", "system"}, {"content", request.system_text}},
                          json{{"role", "user"}, {"content", request.user_text}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  if (options_.structured_output) {
    body["response_format"] = {
        {"type", "json_schema"},
        {"json_schema", {{"name", std::string(to_string(request.schema))}, {"schema", json_schema_for(request.schema)}}}};
  }
  return body;
}

BackendReply HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  auto secs = static_cast<time_t>(options_.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  auto res = client.Post(path_prefix_ + "/chat/completions", headers, request_body(request).dump(),
                         "application/json");
  if (!res) throw TransportError("http request failed: " + httplib::to_string(res.error()));
  if (res->status == 408 || res->status == 429 || res->status >= 500) {
    throw TransportError("http status " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendUnavailable("http status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }

  json payload = json::parse(res->body, nullptr, false);
  BackendReply reply;
  if (payload.is_discarded()) {
    reply.text = res->body;
    return reply;
  }
  try {
    const auto& content = payload.at("choices").at(0).at("message").at("content");
    reply.text = content.is_string() ? content.get<std::string>() : content.dump();
  } catch (const json::exception&) {
    reply.text = res->body;
  }
  if (auto usage = payload.find("usage"); usage != payload.end() && usage->is_object()) {
    if (auto p = usage->find("prompt_tokens"); p != usage->end() && p->is_number_integer()) {
      reply.prompt_tokens = p->get<std::int64_t>();
    }
    if (auto c = usage->find("completion_tokens"); c != usage->end() && c->is_number_integer()) {
      reply.output_tokens = c->get<std::int64_t>();
    }
  }
  return reply;
}

}  // namespace pure
