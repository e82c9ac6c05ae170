#include "pure/run_store.hpp"

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "pure/errors.hpp"
#include "pure/text_util.hpp"

namespace fs = std::filesystem;

namespace pure {

using nlohmann::json;

namespace {

void put_field(std::string& preimage, std::string_view field) {
  preimage += std::to_string(field.size());
  preimage.push_back(':');
  preimage.append(field);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string unique_suffix() {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream ss;
  ss << ::getpid() << '.' << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
  return ss.str();
}

json profile_to_json(const std::string& user_id, int version, const Profile& p) {
  return json{{"user_id", user_id},
              {"version", version},
              {"likes", p.likes},
              {"dislikes", p.dislikes},
              {"features", p.features}};
}

}  // namespace

CacheKey make_cache_key(std::string_view backend_id, std::string_view model_id, double temperature,
                        SchemaId schema, std::string_view prompt_text, std::string_view prompt_version) {
  std::string preimage;
  preimage.reserve(prompt_text.size() + 128);
  put_field(preimage, kCacheDigestAlgorithm);
  put_field(preimage, backend_id);
  put_field(preimage, model_id);
  // %.17g round-trips every double
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", temperature);
  put_field(preimage, temp);
  put_field(preimage, to_string(schema));
  put_field(preimage, prompt_version);
  put_field(preimage, prompt_text);
  return CacheKey{sha256_hex(preimage)};
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::path_for(const CacheKey& key) const {
  return dir_ / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::optional<ChatOutcome> ResponseCache::get(const CacheKey& key) {
  auto path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  json rec = json::parse(read_file(path), nullptr, false);
  try {
    if (rec.is_discarded() || rec.at("key").get<std::string>() != key.digest) throw std::runtime_error("bad key");
    const auto& o = rec.at("outcome");
    ChatOutcome out;
    out.parsed_value = o.at("parsed_value");
    out.raw_text = o.at("raw_text").get<std::string>();
    out.prompt_tokens = o.at("prompt_tokens").get<std::int64_t>();
    out.output_tokens = o.at("output_tokens").get<std::int64_t>();
    out.attempts = o.at("attempts").get<int>();
    return out;
  } catch (const std::exception&) {
    ++corrupt_;
    return std::nullopt;
  }
}

void ResponseCache::put(const CacheKey& key, const ChatOutcome& outcome) {
  auto path = path_for(key);
  std::error_code ec;
  if (fs::exists(path, ec)) return;
  fs::create_directories(path.parent_path());
  json rec{{"key", key.digest},
           {"digest_algorithm", kCacheDigestAlgorithm},
           {"outcome",
            {{"parsed_value", outcome.parsed_value},
             {"raw_text", outcome.raw_text},
             {"prompt_tokens", outcome.prompt_tokens},
             {"output_tokens", outcome.output_tokens},
             {"attempts", outcome.attempts}}}};
  auto tmp = path;
  tmp += ".tmp." + unique_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << rec.dump() << '\n';
    if (!out.flush()) throw std::runtime_error("cache write failed: " + tmp.string());
  }
  // link() refuses to replace an existing entry, so the first writer wins
  fs::create_hard_link(tmp, path, ec);
  fs::remove(tmp, ec);
}

void append_line(const fs::path& path, std::string_view line) {
  std::error_code ec;
  auto size = fs::file_size(path, ec);
  if (!ec && size > 0) {
    std::string content = read_file(path);
    if (!content.empty() && content.back() != '\n') {
      auto cut = content.rfind('\n');
      fs::resize_file(path, cut == std::string::npos ? 0 : cut + 1);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << line << '\n';
  if (!out.flush()) throw std::runtime_error("append failed: " + path.string());
}

ShardedLog::ShardedLog(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ShardedLog::path_for(const std::string& user_id) const {
  return dir_ / (sha256_hex(user_id).substr(0, 24) + ".jsonl");
}

void ShardedLog::append(const std::string& user_id, const json& record) {
  std::lock_guard lock(mutex_);
  append_line(path_for(user_id), record.dump());
}

std::vector<json> ShardedLog::read(const std::string& user_id) const {
  std::lock_guard lock(mutex_);
  std::vector<json> out;
  std::istringstream in(read_file(path_for(user_id)));
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // unterminated tail: a torn write
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) break;
    out.push_back(std::move(rec));
  }
  return out;
}

void ShardedLog::reset(const std::string& user_id) {
  std::lock_guard lock(mutex_);
  std::error_code ec;
  fs::remove(path_for(user_id), ec);
}

void CheckpointStore::checkpoint_profile(const std::string& user_id, int version, const Profile& profile) {
  auto existing = log_.read(user_id);
  if (!existing.empty() && existing.back().value("version", 0) >= version) {
    throw ContractViolation("checkpoint version " + std::to_string(version) + " for user " + user_id +
                            " does not follow " + std::to_string(existing.back().value("version", 0)));
  }
  log_.append(user_id, profile_to_json(user_id, version, profile));
}

LoadedCheckpoint CheckpointStore::load_checkpoint(const std::string& user_id, std::optional<int> max_version) const {
  LoadedCheckpoint out;
  int expected = 1;
  for (const auto& rec : log_.read(user_id)) {
    int v = rec.value("version", -1);
    if (max_version && v > *max_version) break;
    if (v != expected || rec.value("user_id", "") != user_id) {
      out.status = CheckpointStatus::Gap;
      return out;
    }
    out.status = CheckpointStatus::Ok;
    out.profile.version = v;
    out.profile.likes = rec.at("likes").get<std::vector<std::string>>();
    out.profile.dislikes = rec.at("dislikes").get<std::vector<std::string>>();
    out.profile.features = rec.at("features").get<std::vector<std::string>>();
    ++expected;
  }
  return out;
}

void ManifestWriter::append(const json& record) {
  fs::create_directories(path_.parent_path());
  append_line(path_, record.dump());
}

void ManifestWriter::write_start(const json& record, bool resumed) {
  json rec = record;
  rec["event"] = resumed ? "resume" : "start";
  rec["started_at"] = utc_timestamp();
  append(rec);
}

void ManifestWriter::write_finish(const json& counters) {
  append(json{{"event", "finish"}, {"ended_at", utc_timestamp()}, {"counters", counters}});
}

std::vector<json> ManifestWriter::read() const {
  std::vector<json> out;
  std::istringstream in(read_file(path_));
  std::string line;
  while (std::getline(in, line)) {
    json rec = json::parse(line, nullptr, false);
    if (!rec.is_discarded()) out.push_back(std::move(rec));
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace pure
