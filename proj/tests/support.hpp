#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "pure/dataset.hpp"
#include "pure/errors.hpp"
#include "pure/llm_gateway.hpp"
#include "pure/mock_backend.hpp"
#include "pure/random.hpp"
#include "pure/text_util.hpp"

namespace pure::testing {

// Rank20 replies are uniform random permutations seeded by the prompt; everything
// else goes to the mock rules.
class RandomRankBackend : public Backend {
 public:
  explicit RandomRankBackend(std::uint64_t salt = 0) : salt_(salt) {}
  BackendReply send(const ChatRequest& request) override {
    if (request.schema != SchemaId::Rank20) return {mock_complete(request).raw_text, {}, {}};
    SplitMix64 rng(fnv1a64(request.user_text, 14695981039346656037ULL ^ salt_));
    std::vector<std::string> labels;
    for (int i = 1; i <= 20; ++i) labels.push_back(std::to_string(i));
    for (std::size_t i = labels.size() - 1; i > 0; --i) std::swap(labels[i], labels[rng.below(i + 1)]);
    return {nlohmann::json{{"ranking", labels}}.dump(), {}, {}};
  }
  std::string backend_id() const override { return "random-rank"; }
  std::string model_id() const override { return "uniform"; }

 private:
  std::uint64_t salt_;
};

// Replays a fixed list of replies; a TransportError entry is thrown instead of returned.
class ScriptedBackend : public Backend {
 public:
  using Step = std::variant<BackendReply, TransportError>;
  explicit ScriptedBackend(std::vector<Step> steps) : steps_(steps.begin(), steps.end()) {}

  BackendReply send(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    requests.push_back(request);
    if (steps_.empty()) throw std::runtime_error("script exhausted");
    auto step = steps_.front();
    steps_.pop_front();
    if (auto* err = std::get_if<TransportError>(&step)) throw *err;
    return std::get<BackendReply>(step);
  }
  std::string backend_id() const override { return "scripted"; }
  std::string model_id() const override { return "script"; }

  std::vector<ChatRequest> requests;

 private:
  std::mutex mu_;
  std::deque<Step> steps_;
};

// Mock rules, but the backend "dies" (BackendUnavailable) once `budget` calls are spent.
class FailingAfterN : public Backend {
 public:
  explicit FailingAfterN(long budget) : budget_(budget) {}
  BackendReply send(const ChatRequest& request) override {
    if (calls_.fetch_add(1) >= budget_) throw BackendUnavailable("simulated crash");
    return {mock_complete(request).raw_text, {}, {}};
  }
  std::string backend_id() const override { return "mock"; }
  std::string model_id() const override { return "mock-rules-v1"; }
  long calls() const { return calls_.load(); }

 private:
  long budget_;
  std::atomic<long> calls_{0};
};

// Counts calls and forwards to the mock.
class CountingMock : public Backend {
 public:
  BackendReply send(const ChatRequest& request) override {
    ++calls;
    return {mock_complete(request).raw_text, {}, {}};
  }
  std::string backend_id() const override { return "mock"; }
  std::string model_id() const override { return "mock-rules-v1"; }
  std::atomic<long> calls{0};
};

inline GatewayOptions quiet_options() {
  GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

inline ReviewRecord rec(std::string user, std::string item, std::string title, int rating, std::int64_t ts,
                        std::string text = "") {
  return ReviewRecord{std::move(user), std::move(item), std::move(title), std::move(text), rating, ts};
}

// Filler catalog so slates can always draw 19 negatives.
inline ItemPool filler_pool(std::size_t n, const std::string& prefix = "F") {
  ItemPool pool;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), i);
    pool.push_back({id, "Filler product " + std::to_string(i)});
  }
  return pool;
}

inline ItemPool pool_with(const std::vector<UserHistory>& histories, std::size_t fillers) {
  ItemPool pool = build_item_pool(histories);
  for (auto& f : filler_pool(fillers)) pool.push_back(std::move(f));
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
  return pool;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pure_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Synthetic users with titles drawn from a small vocabulary; deterministic in `seed`.
inline std::vector<UserHistory> synthetic_users(std::size_t n_users, std::size_t min_len, std::size_t max_len,
                                                std::uint64_t seed, std::size_t words_per_review = 12) {
  static const char* kWords[] = {"adventure", "puzzle", "racing",  "strategy", "shooter",  "fantasy",
                                 "horror",    "sports", "platform", "arcade",  "survival", "stealth",
                                 "soundtrack", "controls", "graphics", "multiplayer", "campaign", "story"};
  constexpr std::size_t kN = sizeof(kWords) / sizeof(kWords[0]);
  SplitMix64 rng(seed);
  std::vector<UserHistory> out;
  std::size_t item_counter = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    UserHistory h;
    char uid[32];
    std::snprintf(uid, sizeof uid, "U%05zu", u);
    h.user_id = uid;
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t t = 0; t < len; ++t) {
      char iid[32];
      std::snprintf(iid, sizeof iid, "I%06zu", item_counter++);
      std::string title = std::string(kWords[rng.below(kN)]) + " " + kWords[rng.below(kN)] + " " + iid;
      std::string text;
      for (std::size_t w = 0; w < words_per_review; ++w) {
        if (w) text += ' ';
        text += kWords[rng.below(kN)];
      }
      h.records.push_back(rec(h.user_id, iid, title, 1 + static_cast<int>(rng.below(5)),
                              1000 + static_cast<std::int64_t>(t) * 10, text));
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace pure::testing
