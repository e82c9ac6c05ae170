#include "pure/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pure/errors.hpp"
#include "pure/tokenizer.hpp"

namespace pure {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Diagnostics {
 public:
  void add(const std::string& field, const std::string& msg) { lines_.push_back(field + ": " + msg); }
  void raise_if_any() const {
    if (lines_.empty()) return;
    std::string all = "invalid run config:";
    for (const auto& l : lines_) all += "\n  " + l;
    throw ConfigError(all);
  }

 private:
  std::vector<std::string> lines_;
};

template <typename T>
void read_field(const json& j, const char* key, T& dst, Diagnostics& diag, const std::string& prefix = "") {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception&) {
    diag.add(prefix + key, "has the wrong type");
  }
}

const std::set<std::string> kKnownKeys = {
    "run_id",        "history_path",   "output_dir",     "cache_dir",         "methods",
    "mode",          "run_seed",       "first_target_index", "min_interactions", "max_users",
    "schema_retries", "transport_retries", "updater_stride", "extractor_batch", "workers",
    "tradeoff_k",    "tokenizer",      "backend"};

const std::set<std::string> kKnownBackendKeys = {"kind",        "base_url",  "model",        "api_key_env",
                                                  "structured_output", "timeout_s", "max_in_flight"};

}  // namespace

json RunConfig::snapshot() const {
  json methods_json = json::array();
  for (const auto& m : methods) methods_json.push_back(m.key());
  return json{{"run_id", run_id},
              {"methods", methods_json},
              {"mode", std::string(to_string(eval.mode))},
              {"run_seed", eval.run_seed},
              {"first_target_index", eval.first_target_index},
              {"min_interactions", min_interactions},
              {"max_users", max_users ? json(*max_users) : json(nullptr)},
              {"schema_retries", schema_retries},
              {"transport_retries", transport_retries},
              {"updater_stride", eval.updater_stride},
              {"extractor_batch", eval.extractor_batch},
              {"tradeoff_k", eval.tradeoff_k},
              {"tokenizer", eval.tokenizer_id},
              {"backend",
               {{"kind", backend.kind},
                {"base_url", backend.base_url},
                {"model", backend.model},
                {"structured_output", backend.structured_output}}}};
}

void RunConfig::validate() const {
  Diagnostics diag;
  if (run_id.empty()) diag.add("run_id", "is required");
  if (run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    diag.add("run_id", "must be a plain name");
  }
  if (history_path.empty()) diag.add("history_path", "is required");
  if (output_dir.empty()) diag.add("output_dir", "is required");
  if (methods.empty()) diag.add("methods", "must name at least one method");
  if (eval.first_target_index < 2) diag.add("first_target_index", "must be >= 2");
  for (const auto& m : methods) {
    if (m.family == MethodFamily::ICL && eval.mode == EvalMode::Continuous && eval.first_target_index < 3) {
      diag.add("first_target_index", "must be >= 3 when an icl method is selected");
      break;
    }
  }
  if (min_interactions < 1) diag.add("min_interactions", "must be >= 1");
  if (max_users && *max_users == 0) diag.add("max_users", "must be positive");
  if (schema_retries < 1) diag.add("schema_retries", "must be >= 1");
  if (transport_retries < 0 || transport_retries > 5) diag.add("transport_retries", "must be in [0, 5]");
  if (eval.updater_stride < 1) diag.add("updater_stride", "must be >= 1");
  if (eval.workers < 1) diag.add("workers", "must be >= 1");
  if (eval.tradeoff_k != 1 && eval.tradeoff_k != 5 && eval.tradeoff_k != 10 && eval.tradeoff_k != 20) {
    diag.add("tradeoff_k", "must be one of 1, 5, 10, 20");
  }
  if (!is_registered_tokenizer(eval.tokenizer_id)) diag.add("tokenizer", "unknown tokenizer '" + eval.tokenizer_id + "'");
  if (backend.kind != "mock" && backend.kind != "http") diag.add("backend.kind", "must be mock or http");
  if (backend.kind == "http") {
    if (backend.base_url.empty()) diag.add("backend.base_url", "is required for the http backend");
    if (backend.model.empty()) diag.add("backend.model", "is required for the http backend");
    if (backend.timeout_s < 1) diag.add("backend.timeout_s", "must be positive");
  }
  diag.raise_if_any();
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  Diagnostics diag;
  RunConfig cfg;
  if (!j.is_object()) throw ConfigError("invalid run config: top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!kKnownKeys.contains(key)) diag.add(key, "unknown field");
  }

  std::string history, output, cache, mode = "continuous";
  read_field(j, "run_id", cfg.run_id, diag);
  read_field(j, "history_path", history, diag);
  read_field(j, "output_dir", output, diag);
  read_field(j, "cache_dir", cache, diag);
  read_field(j, "mode", mode, diag);
  read_field(j, "run_seed", cfg.eval.run_seed, diag);
  read_field(j, "first_target_index", cfg.eval.first_target_index, diag);
  read_field(j, "min_interactions", cfg.min_interactions, diag);
  read_field(j, "schema_retries", cfg.schema_retries, diag);
  read_field(j, "transport_retries", cfg.transport_retries, diag);
  read_field(j, "updater_stride", cfg.eval.updater_stride, diag);
  read_field(j, "extractor_batch", cfg.eval.extractor_batch, diag);
  read_field(j, "workers", cfg.eval.workers, diag);
  read_field(j, "tradeoff_k", cfg.eval.tradeoff_k, diag);
  read_field(j, "tokenizer", cfg.eval.tokenizer_id, diag);
  if (auto it = j.find("max_users"); it != j.end() && !it->is_null()) {
    std::size_t n = 0;
    read_field(j, "max_users", n, diag);
    cfg.max_users = n;
  }

  auto resolve = [&](const std::string& p) { return p.empty() ? fs::path() : (base_dir / p).lexically_normal(); };
  cfg.history_path = resolve(history);
  cfg.output_dir = resolve(output);
  cfg.cache_dir = cache.empty() ? cfg.output_dir / "cache" : resolve(cache);

  try {
    cfg.eval.mode = eval_mode_from_string(mode);
  } catch (const ConfigError& e) {
    diag.add("mode", e.what());
  }

  if (auto it = j.find("methods"); it != j.end()) {
    if (!it->is_array()) {
      diag.add("methods", "must be an array of method names");
    } else {
      for (const auto& m : *it) {
        if (!m.is_string()) {
          diag.add("methods", "entries must be strings");
          continue;
        }
        auto name = m.get<std::string>();
        if (name == "all") {
          for (const auto& g : full_method_grid()) cfg.methods.push_back(g);
          continue;
        }
        try {
          cfg.methods.push_back(MethodSpec::parse(name));
        } catch (const ConfigError& e) {
          diag.add("methods", e.what());
        }
      }
    }
  } else {
    cfg.methods = full_method_grid();
  }

  if (auto it = j.find("backend"); it != j.end()) {
    if (!it->is_object()) {
      diag.add("backend", "must be an object");
    } else {
      for (const auto& [key, _] : it->items()) {
        if (!kKnownBackendKeys.contains(key)) diag.add("backend." + key, "unknown field");
      }
      read_field(*it, "kind", cfg.backend.kind, diag, "backend.");
      read_field(*it, "base_url", cfg.backend.base_url, diag, "backend.");
      read_field(*it, "model", cfg.backend.model, diag, "backend.");
      read_field(*it, "api_key_env", cfg.backend.api_key_env, diag, "backend.");
      read_field(*it, "structured_output", cfg.backend.structured_output, diag, "backend.");
      read_field(*it, "timeout_s", cfg.backend.timeout_s, diag, "backend.");
      read_field(*it, "max_in_flight", cfg.backend.max_in_flight, diag, "backend.");
    }
  }
  diag.raise_if_any();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  return parse_run_config(j, path.parent_path());
}

}  // namespace pure
