#include "pure/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "pure/dataset.hpp"
#include "pure/errors.hpp"
#include "pure/http_backend.hpp"
#include "pure/mock_backend.hpp"
#include "pure/run_store.hpp"
#include "pure/text_util.hpp"

namespace pure {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) break;
    out.push_back(std::move(rec));
  }
  return out;
}

fs::path metrics_path(const fs::path& run_dir, const std::string& run_id) {
  return run_dir / ("metrics_" + run_id + ".csv");
}
fs::path tradeoff_path(const fs::path& run_dir, const std::string& run_id) {
  return run_dir / ("tradeoff_" + run_id + ".csv");
}
fs::path manifest_path(const fs::path& run_dir, const std::string& run_id) {
  return run_dir / ("manifest_" + run_id + ".jsonl");
}
fs::path buckets_path(const fs::path& run_dir, const std::string& run_id) {
  return run_dir / ("buckets_" + run_id + ".json");
}

json buckets_to_json(const BucketAssignment& b) {
  json j{{"excluded", b.excluded}};
  for (const auto& [bucket, users] : b.users) j[std::string(to_string(bucket))] = users;
  return j;
}

BucketAssignment buckets_from_json(const json& j) {
  BucketAssignment b;
  b.excluded = j.value("excluded", std::size_t{0});
  for (auto bucket : {Bucket::Short, Bucket::Middle, Bucket::Long}) {
    b.users[bucket] = j.value(std::string(to_string(bucket)), std::vector<std::string>{});
  }
  return b;
}

struct LoadedRun {
  json start;  // first start record
  std::vector<SessionResult> results;
  BucketAssignment buckets;
};

// Throws ConfigError when the run does not exist.
LoadedRun load_run(const fs::path& output_dir, const std::string& run_id) {
  const fs::path run_dir = output_dir / run_id;
  auto manifest = ManifestWriter(manifest_path(run_dir, run_id)).read();
  LoadedRun run;
  for (const auto& rec : manifest) {
    if (rec.value("event", "") == "start") {
      run.start = rec;
      break;
    }
  }
  if (run.start.is_null()) throw ConfigError("no run '" + run_id + "' under " + output_dir.string());

  const fs::path sessions_dir = run_dir / ("sessions_" + run_id);
  std::vector<fs::path> files;
  if (fs::exists(sessions_dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(sessions_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    for (const auto& rec : read_jsonl(f)) run.results.push_back(SessionResult::from_json(rec));
  }
  if (fs::exists(buckets_path(run_dir, run_id))) {
    run.buckets = buckets_from_json(json::parse(slurp(buckets_path(run_dir, run_id))));
  }
  return run;
}

}  // namespace

json IngestSummary::to_json() const {
  json j{{"review_lines", review_lines},
         {"reviews_skipped", reviews_skipped},
         {"metadata_entries", metadata_entries},
         {"metadata_skipped", metadata_skipped},
         {"dropped_no_metadata", dropped_no_metadata},
         {"users", users},
         {"users_excluded", users_excluded},
         {"items", items},
         {"interactions", interactions},
         {"continuous_sessions", continuous_sessions},
         {"oneshot_sessions", oneshot_sessions},
         {"output_digest", output_digest}};
  if (users == 0) j["note"] = "no users remain after metadata join and filtering";
  return j;
}

IngestSummary cmd_ingest(const fs::path& reviews_path, const fs::path& metadata_path, const fs::path& out_path,
                         std::size_t min_interactions, std::size_t first_target_index) {
  IngestSummary s;
  std::istringstream reviews_in(read_maybe_gzip(reviews_path));
  auto reviews = parse_reviews(reviews_in);
  std::istringstream meta_in(read_maybe_gzip(metadata_path));
  auto meta = parse_metadata(meta_in);

  s.review_lines = reviews.lines;
  s.reviews_skipped = reviews.skipped;
  s.metadata_entries = meta.titles.size();
  s.metadata_skipped = meta.skipped;

  auto joined = join_metadata(std::move(reviews.records), meta.titles);
  s.dropped_no_metadata = joined.dropped;
  std::set<std::string> all_users;
  for (const auto& r : joined.records) all_users.insert(r.user_id);

  auto histories = build_histories(std::move(joined.records), min_interactions);
  s.users = histories.size();
  s.users_excluded = all_users.size() - histories.size();
  s.items = build_item_pool(histories).size();
  for (const auto& h : histories) {
    s.interactions += h.length();
    if (h.length() >= first_target_index) s.continuous_sessions += h.length() - first_target_index + 1;
    if (h.length() >= 2) ++s.oneshot_sessions;
  }

  std::ostringstream out;
  write_histories(out, histories);
  const std::string content = out.str();
  s.output_digest = sha256_hex(content);
  write_atomic(out_path, content);
  auto summary_path = out_path;
  summary_path += ".summary.json";
  write_atomic(summary_path, s.to_json().dump(2) + "\n");
  return s;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") return std::make_shared<MockBackend>();
  if (config.kind == "http") {
    HttpBackendOptions opts;
    opts.base_url = config.base_url;
    opts.model = config.model;
    opts.structured_output = config.structured_output;
    opts.timeout = std::chrono::seconds(config.timeout_s);
    if (!config.api_key_env.empty()) {
      if (const char* key = std::getenv(config.api_key_env.c_str())) opts.api_key = key;
    }
    return std::make_shared<HttpBackend>(opts);
  }
  throw ConfigError("backend.kind: must be mock or http");
}

int cmd_run(const RunConfig& config, std::ostream& log, std::shared_ptr<Backend> backend) {
  try {
    config.validate();
    if (!fs::exists(config.history_path)) {
      throw ConfigError("history_path: " + config.history_path.string() + " not found (run `pure ingest` first)");
    }
    const std::string history_bytes = read_maybe_gzip(config.history_path);
    std::istringstream history_in(history_bytes);
    auto all = read_histories(history_in);
    const ItemPool pool = build_item_pool(all);

    std::vector<UserHistory> histories;
    for (auto& h : all) {
      if (h.length() >= config.min_interactions) histories.push_back(std::move(h));
    }
    std::sort(histories.begin(), histories.end(),
              [](const UserHistory& a, const UserHistory& b) { return a.user_id < b.user_id; });
    if (config.max_users && histories.size() > *config.max_users) histories.resize(*config.max_users);

    const fs::path run_dir = config.run_dir();
    fs::create_directories(run_dir);
    ManifestWriter manifest(manifest_path(run_dir, config.run_id));
    const std::string dataset_digest = sha256_hex(history_bytes);

    bool resumed = false;
    for (const auto& rec : manifest.read()) {
      if (rec.value("event", "") != "start") continue;
      resumed = true;
      if (rec.at("config") != config.snapshot()) {
        throw ConfigError("run_id '" + config.run_id + "' already exists with a different configuration");
      }
      if (rec.value("dataset_digest", "") != dataset_digest) {
        throw ConfigError("run_id '" + config.run_id + "' already exists for a different dataset");
      }
      break;
    }

    if (!backend) backend = make_backend(config.backend);
    ResponseCache cache(config.cache_dir);
    GatewayOptions gopts;
    gopts.schema_retries = config.schema_retries;
    gopts.transport_retries = config.transport_retries;
    gopts.tokenizer_id = config.eval.tokenizer_id;
    gopts.prompt_version = std::string(kPromptVersion);
    gopts.max_in_flight = config.backend.max_in_flight;
    Gateway gateway(backend, gopts, &cache);

    manifest.write_start(json{{"run_id", config.run_id},
                              {"dataset_digest", dataset_digest},
                              {"config", config.snapshot()},
                              {"run_seed", config.eval.run_seed},
                              {"prompt_version", kPromptVersion},
                              {"backend_id", backend->backend_id()},
                              {"model_id", backend->model_id()},
                              {"tokenizer_id", config.eval.tokenizer_id},
                              {"cache_digest_algorithm", kCacheDigestAlgorithm}},
                         resumed);

    RunStorage storage(run_dir, config.run_id);
    MatrixReport report;
    try {
      report = run_matrix(histories, config.methods, gateway, config.eval, &storage, &pool);
    } catch (const BackendUnavailable& e) {
      log << "backend unavailable: " << e.what() << "\n"
          << "completed sessions and profile checkpoints are kept; rerun with run_id '" << config.run_id
          << "' to resume\n";
      return kExitBackend;
    }

    write_atomic(buckets_path(run_dir, config.run_id), buckets_to_json(report.buckets).dump() + "\n");
    std::ostringstream metrics, tradeoff;
    write_metrics_csv(metrics, report.table);
    write_tradeoff_csv(tradeoff, report.tradeoff);
    write_atomic(metrics_path(run_dir, config.run_id), metrics.str());
    write_atomic(tradeoff_path(run_dir, config.run_id), tradeoff.str());

    std::int64_t fallbacks = 0, hallucinations = 0, conflicts = 0;
    for (const auto& r : report.results) {
      fallbacks += r.parse_fallbacks;
      hallucinations += r.ranking.hallucinated_count;
      conflicts += r.profile_conflicts;
    }
    const auto c = gateway.counters();
    json counters{{"users", histories.size() - report.users_skipped},
                  {"users_skipped", report.users_skipped},
                  {"sessions", report.results.size()},
                  {"fallbacks", fallbacks},
                  {"hallucinations", hallucinations},
                  {"profile_conflicts", conflicts},
                  {"backend_calls", c.backend_calls},
                  {"cache_hits", c.cache_hits},
                  {"schema_repairs", c.schema_repairs},
                  {"parse_exhausted", c.parse_exhausted},
                  {"transport_failures", c.transport_failures},
                  {"corrupt_cache_entries", cache.corrupt_entries()},
                  {"bucket_excluded_users", report.buckets.excluded}};
    if (c.fallback_prompt_tokens > 0) {
      counters["reported_prompt_tokens"] = c.reported_prompt_tokens;
      counters["tokenizer_prompt_tokens"] = c.fallback_prompt_tokens;
      counters["reported_to_tokenizer_ratio"] =
          static_cast<double>(c.reported_prompt_tokens) / static_cast<double>(c.fallback_prompt_tokens);
    }
    manifest.write_finish(counters);

    log << "run " << config.run_id << ": " << report.results.size() << " sessions, " << c.backend_calls
        << " backend calls, " << c.cache_hits << " cache hits\n"
        << "wrote " << metrics_path(run_dir, config.run_id).string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IngestError& e) {
    log << "config error: history file unreadable: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendUnavailable& e) {
    log << "backend unavailable: " << e.what() << "\n";
    return kExitBackend;
  }
}

int cmd_report(const fs::path& output_dir, const std::string& run_id, std::ostream& out, std::ostream& log,
               bool csv) {
  LoadedRun run;
  try {
    run = load_run(output_dir, run_id);
  } catch (const ConfigError& e) {
    log << e.what() << "\n";
    return kExitConfig;
  }
  if (run.results.empty()) {
    if (csv) {
      write_metrics_csv(out, MetricsTable{});
    } else {
      out << "run " << run_id << ": no sessions recorded; nothing to report\n";
    }
    return kExitOk;
  }
  auto table = aggregate(run.results);
  if (csv) {
    write_metrics_csv(out, table);
    return kExitOk;
  }
  const auto& cfg = run.start.at("config");
  const int k = cfg.value("tradeoff_k", 10);
  std::set<std::string> users;
  for (const auto& r : run.results) users.insert(r.user_id);
  out << "run " << run_id << " (" << cfg.value("mode", "continuous") << ", " << table.rows.size() << " methods, "
      << users.size() << " users, " << run.results.size() << " sessions)\n\n";
  out << "NDCG@k x100 (per-user session mean, averaged over users)\n" << render_ndcg_table(table) << "\n";
  out << "Component grid, |T| = mean recommender input tokens\n" << render_component_table(table) << "\n";
  auto rows = tradeoff_table(run.results, run.buckets, k);
  out << "Trade-off by cumulative review tokens (N@" << k << ")\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-7s %-22s %8s %10s %7s\n", "bucket", "method", "ndcg", "|T|", "users");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-7s %-22s %8.2f %10.2f %7zu\n", std::string(to_string(r.bucket)).c_str(),
                  r.method.key().c_str(), r.ndcg_x100, r.mean_input_tokens, r.n_users);
    out << line;
  }
  out << "users above 2000 review tokens (not bucketed): " << run.buckets.excluded << "\n";
  return kExitOk;
}

int cmd_plot_data(const fs::path& output_dir, const std::string& run_id, std::ostream& out, std::ostream& log) {
  LoadedRun run;
  try {
    run = load_run(output_dir, run_id);
  } catch (const ConfigError& e) {
    log << e.what() << "\n";
    return kExitConfig;
  }
  const int k = run.start.at("config").value("tradeoff_k", 10);
  std::vector<TradeoffRow> rows;
  if (!run.results.empty()) rows = tradeoff_table(run.results, run.buckets, k);
  write_tradeoff_csv(out, rows);
  return kExitOk;
}

}  // namespace pure
