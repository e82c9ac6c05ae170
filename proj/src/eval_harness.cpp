#include "pure/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "pure/errors.hpp"
#include "pure/profile_engine.hpp"
#include "pure/tokenizer.hpp"

namespace pure {

using nlohmann::json;

namespace {

thread_local std::optional<SessionContext> t_session;

class SessionScope {
 public:
  SessionScope(const std::string& user_id, std::size_t target) { t_session = SessionContext{user_id, target}; }
  ~SessionScope() { t_session.reset(); }
  SessionScope(const SessionScope&) = delete;
  SessionScope& operator=(const SessionScope&) = delete;
};

std::size_t grid_index(const MethodSpec& m) {
  auto grid = full_method_grid();
  return static_cast<std::size_t>(std::find(grid.begin(), grid.end(), m) - grid.begin());
}

std::size_t min_history_for(const MethodSpec& method, std::size_t first_target) {
  std::size_t need = std::max<std::size_t>(first_target, 2);
  if (method.family == MethodFamily::ICL) need = std::max<std::size_t>(need, 3);
  return need;
}

// Sessions for targets first..k_u, resuming from whatever `storage` already holds.
std::vector<SessionResult> run_sessions(const UserHistory& history, const MethodSpec& method, Gateway& gateway,
                                        const ItemPool& pool, const EvalConfig& config, MethodStorage* storage,
                                        std::size_t first) {
  method.validate();
  const std::size_t k = history.length();
  if (first < 2 || first > k) {
    throw ContractViolation("user " + history.user_id + ": first target " + std::to_string(first) +
                            " needs 2 <= first <= k_u = " + std::to_string(k));
  }
  if (method.family == MethodFamily::ICL && first < 3) {
    throw ContractViolation("ICL needs at least two observed purchases (first target >= 3)");
  }
  if (config.updater_stride < 1) throw ConfigError("updater_stride must be >= 1");
  const std::string& user = history.user_id;

  std::vector<SessionResult> results;
  if (storage != nullptr) {
    auto logged = storage->sessions.read(user);
    for (const auto& j : logged) {
      auto r = SessionResult::from_json(j);
      if (r.user_id != user || r.method != method || r.target_index != first + results.size()) break;
      results.push_back(std::move(r));
    }
    if (results.size() != logged.size()) {
      storage->sessions.reset(user);
      for (const auto& r : results) storage->sessions.append(user, r.to_json());
    }
  }
  const std::size_t next = first + results.size();
  if (next > k) return results;

  const bool incremental = method.use_extractor && !config.extractor_batch;
  Profile profile;
  ProfileStats pending;
  int pending_fallbacks = 0;
  int last_checkpoint = 0;

  auto advance_to = [&](std::size_t version, std::size_t count_from) {
    while (static_cast<std::size_t>(profile.version) < version) {
      const std::size_t rec = static_cast<std::size_t>(profile.version) + 1;
      ProfileStats s;
      int exhausted = 0;
      Extracted ext;
      try {
        ext = extract(history.at(rec), gateway, &s);
      } catch (const ParseExhausted&) {
        exhausted = 1;
      }
      const bool run_updater = method.use_updater && rec % static_cast<std::size_t>(config.updater_stride) == 0;
      profile = advance(profile, ext, gateway, run_updater, &s);
      if (rec >= count_from) {
        pending += s;
        pending_fallbacks += exhausted;
      }
      if (storage != nullptr && profile.version > last_checkpoint) {
        storage->checkpoints.checkpoint_profile(user, profile.version, profile);
        last_checkpoint = profile.version;
      }
    }
  };

  if (incremental) {
    SessionScope scope(user, next);
    const std::size_t need = next - 1;
    if (storage != nullptr) {
      auto latest = storage->checkpoints.load_checkpoint(user);
      if (latest.status == CheckpointStatus::Gap) {
        storage->checkpoints.reset(user);
      } else if (latest.status == CheckpointStatus::Ok) {
        last_checkpoint = latest.profile.version;
        // The step for record `need` is charged to session `next`, so replay it.
        if (next > first && need > 1) {
          auto usable = storage->checkpoints.load_checkpoint(user, static_cast<int>(need - 1));
          if (usable.status == CheckpointStatus::Ok) profile = usable.profile;
        }
      }
    }
    advance_to(need, next == first ? 1 : need);
  }

  for (std::size_t t = next; t <= k; ++t) {
    SessionScope scope(user, t);
    if (incremental && t > next) advance_to(t - 1, t - 1);

    const std::span<const ReviewRecord> observed(history.records.data(), t - 1);
    Profile session_profile = profile;
    if (method.use_extractor && config.extractor_batch) {
      ProfileStats s;
      Extracted ext;
      try {
        ext = extract_batch(observed, gateway, &s);
      } catch (const ParseExhausted&) {
        ++pending_fallbacks;
      }
      auto raw = merge(Profile{}, ext);
      session_profile = method.use_updater ? update(raw, gateway, &s) : collapse_exact(raw);
      session_profile.version = static_cast<int>(t - 1);
      pending += s;
    }

    const auto slate = sample_candidates(history, t, pool, session_seed(config.run_seed, user, t));
    const std::string prompt = method.use_extractor
                                   ? render_recommender(session_profile, observed, slate, method.family)
                                   : render_baseline(method, observed, slate);
    ChatRequest req{system_prompt(), prompt, SchemaId::Rank20};

    SessionResult r;
    r.user_id = user;
    r.target_index = t;
    r.method = method;
    r.truth_item_id = slate.truth().item_id;
    r.parse_fallbacks = pending_fallbacks + pending.fallbacks;
    try {
      auto out = gateway.complete_json(req);
      auto labels = out.parsed_value.at("ranking").get<std::vector<std::string>>();
      r.ranking = sanitize(labels, slate);
      r.recommender_prompt_tokens = out.prompt_tokens;
    } catch (const ParseExhausted&) {
      ++r.parse_fallbacks;
      r.ranking = sanitize({}, slate);
      r.recommender_prompt_tokens =
          count_tokens(req.system_text, config.tokenizer_id) + count_tokens(req.user_text, config.tokenizer_id);
    }
    for (int cutoff : kNdcgCutoffs) r.ndcg[cutoff] = ndcg_at_k(r.ranking.truth_rank, cutoff);
    r.extractor_tokens = pending.extractor_tokens;
    r.updater_tokens = pending.updater_tokens;
    r.profile_conflicts = method.use_extractor ? count_conflicts(session_profile) : 0;
    pending = {};
    pending_fallbacks = 0;

    if (storage != nullptr) storage->sessions.append(user, r.to_json());
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string_view to_string(EvalMode mode) { return mode == EvalMode::Continuous ? "continuous" : "oneshot"; }

EvalMode eval_mode_from_string(std::string_view name) {
  if (name == "continuous") return EvalMode::Continuous;
  if (name == "oneshot") return EvalMode::OneShot;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected continuous or oneshot)");
}

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::Short:
      return "short";
    case Bucket::Middle:
      return "middle";
    case Bucket::Long:
      return "long";
  }
  return "unknown";
}

std::optional<SessionContext> current_session() { return t_session; }

json SessionResult::to_json() const {
  json nd = json::object();
  for (const auto& [k, v] : ndcg) nd[std::to_string(k)] = v;
  return json{{"user_id", user_id},
              {"target_index", target_index},
              {"method", method.key()},
              {"order", ranking.order},
              {"truth_rank", ranking.truth_rank},
              {"hallucinated_count", ranking.hallucinated_count},
              {"repaired", ranking.repaired},
              {"ndcg", nd},
              {"recommender_prompt_tokens", recommender_prompt_tokens},
              {"extractor_tokens", extractor_tokens},
              {"updater_tokens", updater_tokens},
              {"parse_fallbacks", parse_fallbacks},
              {"profile_conflicts", profile_conflicts},
              {"truth_item_id", truth_item_id}};
}

SessionResult SessionResult::from_json(const json& j) {
  SessionResult r;
  r.user_id = j.at("user_id").get<std::string>();
  r.target_index = j.at("target_index").get<std::size_t>();
  r.method = MethodSpec::parse(j.at("method").get<std::string>());
  r.ranking.order = j.at("order").get<std::vector<std::size_t>>();
  r.ranking.truth_rank = j.at("truth_rank").get<int>();
  r.ranking.hallucinated_count = j.at("hallucinated_count").get<int>();
  r.ranking.repaired = j.at("repaired").get<bool>();
  for (const auto& [k, v] : j.at("ndcg").items()) r.ndcg[std::stoi(k)] = v.get<double>();
  r.recommender_prompt_tokens = j.at("recommender_prompt_tokens").get<std::int64_t>();
  r.extractor_tokens = j.at("extractor_tokens").get<std::int64_t>();
  r.updater_tokens = j.at("updater_tokens").get<std::int64_t>();
  r.parse_fallbacks = j.at("parse_fallbacks").get<int>();
  r.profile_conflicts = j.value("profile_conflicts", 0);
  r.truth_item_id = j.at("truth_item_id").get<std::string>();
  return r;
}

RunStorage::RunStorage(std::filesystem::path run_dir, std::string run_id)
    : run_dir_(std::move(run_dir)), run_id_(std::move(run_id)) {}

MethodStorage& RunStorage::for_method(const MethodSpec& method) {
  std::lock_guard lock(mutex_);
  auto& slot = by_method_[method.key()];
  if (!slot) {
    slot = std::make_unique<MethodStorage>(run_dir_ / ("sessions_" + run_id_) / method.key(),
                                           run_dir_ / ("checkpoints_" + run_id_) / method.key());
  }
  return *slot;
}

std::vector<SessionResult> run_user_continuous(const UserHistory& history, const MethodSpec& method,
                                               Gateway& gateway, const ItemPool& pool, const EvalConfig& config,
                                               MethodStorage* storage) {
  return run_sessions(history, method, gateway, pool, config, storage, config.first_target_index);
}

SessionResult run_user_oneshot(const UserHistory& history, const MethodSpec& method, Gateway& gateway,
                               const ItemPool& pool, const EvalConfig& config, MethodStorage* storage) {
  if (history.length() < 2) throw ContractViolation("one-shot evaluation needs k_u >= 2");
  auto results = run_sessions(history, method, gateway, pool, config, storage, history.length());
  return results.back();
}

MetricsTable aggregate(const std::vector<SessionResult>& results) {
  if (results.empty()) throw ContractViolation("aggregate needs at least one session");
  // method -> user -> sessions; ordered containers make the fold order-independent
  std::map<std::size_t, std::map<std::string, std::vector<const SessionResult*>>> groups;
  for (const auto& r : results) groups[grid_index(r.method)][r.user_id].push_back(&r);

  MetricsTable table;
  for (auto& [gi, users] : groups) {
    MetricsRow row;
    row.method = users.begin()->second.front()->method;
    row.n_users = users.size();
    std::map<int, double> macro;
    std::int64_t token_sum = 0;
    std::size_t hallucinated = 0, repaired = 0, fallbacks = 0;
    for (auto& [user, sessions] : users) {
      std::sort(sessions.begin(), sessions.end(),
                [](const SessionResult* a, const SessionResult* b) { return a->target_index < b->target_index; });
      for (int cutoff : kNdcgCutoffs) {
        double sum = 0;
        for (const auto* s : sessions) sum += s->ndcg.at(cutoff);
        macro[cutoff] += sum / static_cast<double>(sessions.size());
      }
      for (const auto* s : sessions) {
        token_sum += s->recommender_prompt_tokens;
        hallucinated += s->ranking.hallucinated_count > 0 ? 1 : 0;
        repaired += s->ranking.repaired ? 1 : 0;
        fallbacks += s->parse_fallbacks > 0 ? 1 : 0;
        ++row.n_sessions;
      }
    }
    for (int cutoff : kNdcgCutoffs) row.ndcg_x100[cutoff] = macro[cutoff] / static_cast<double>(row.n_users) * 100.0;
    const auto n = static_cast<double>(row.n_sessions);
    row.mean_input_tokens = static_cast<double>(token_sum) / n;
    row.hallucination_rate = static_cast<double>(hallucinated) / n;
    row.repaired_rate = static_cast<double>(repaired) / n;
    row.fallback_rate = static_cast<double>(fallbacks) / n;
    table.rows.push_back(std::move(row));
  }
  return table;
}

BucketAssignment bucket_users(const std::vector<UserHistory>& histories, std::string_view tokenizer_id) {
  BucketAssignment out;
  for (auto b : {Bucket::Short, Bucket::Middle, Bucket::Long}) out.users[b];
  for (const auto& h : histories) {
    std::int64_t tokens = 0;
    for (const auto& r : h.records) tokens += count_tokens(r.text, tokenizer_id);
    if (tokens < 500) {
      out.users[Bucket::Short].push_back(h.user_id);
    } else if (tokens < 1000) {
      out.users[Bucket::Middle].push_back(h.user_id);
    } else if (tokens < 2000) {
      out.users[Bucket::Long].push_back(h.user_id);
    } else {
      ++out.excluded;
    }
  }
  return out;
}

std::vector<TradeoffRow> tradeoff_table(const std::vector<SessionResult>& results, const BucketAssignment& buckets,
                                        int k) {
  std::vector<TradeoffRow> rows;
  for (const auto& [bucket, users] : buckets.users) {
    std::set<std::string> members(users.begin(), users.end());
    std::vector<SessionResult> subset;
    for (const auto& r : results) {
      if (members.contains(r.user_id)) subset.push_back(r);
    }
    if (subset.empty()) continue;
    for (const auto& row : aggregate(subset).rows) {
      rows.push_back({bucket, row.method, row.ndcg_x100.at(k), row.mean_input_tokens, row.n_users});
    }
  }
  return rows;
}

MatrixReport run_matrix(const std::vector<UserHistory>& histories, const std::vector<MethodSpec>& methods,
                        Gateway& gateway, const EvalConfig& config, RunStorage* storage, const ItemPool* pool) {
  for (const auto& m : methods) m.validate();
  if (std::find(kNdcgCutoffs.begin(), kNdcgCutoffs.end(), config.tradeoff_k) == kNdcgCutoffs.end()) {
    throw ConfigError("tradeoff_k must be one of 1, 5, 10, 20");
  }
  const ItemPool owned_pool = pool == nullptr ? build_item_pool(histories) : ItemPool{};
  const ItemPool& items = pool == nullptr ? owned_pool : *pool;

  std::size_t min_len = config.mode == EvalMode::Continuous ? config.first_target_index : 2;
  for (const auto& m : methods) min_len = std::max(min_len, min_history_for(m, min_len));

  MatrixReport report;
  std::vector<const UserHistory*> eligible;
  std::vector<UserHistory> eligible_copy;
  for (const auto& h : histories) {
    if (h.length() >= min_len) {
      eligible.push_back(&h);
      eligible_copy.push_back(h);
    } else {
      ++report.users_skipped;
    }
  }

  const std::size_t n_items = methods.size() * eligible.size();
  std::vector<std::vector<SessionResult>> slots(n_items);
  std::atomic<std::size_t> next_item{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next_item.fetch_add(1);
      if (i >= n_items) return;
      const auto& method = methods[i / eligible.size()];
      const auto& history = *eligible[i % eligible.size()];
      try {
        MethodStorage* ms = storage != nullptr ? &storage->for_method(method) : nullptr;
        if (config.mode == EvalMode::Continuous) {
          slots[i] = run_user_continuous(history, method, gateway, items, config, ms);
        } else {
          slots[i] = {run_user_oneshot(history, method, gateway, items, config, ms)};
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int n_workers = std::max(1, config.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (int w = 0; w < n_workers; ++w) pool_threads.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto& s : slots) {
    for (auto& r : s) report.results.push_back(std::move(r));
  }
  if (!report.results.empty()) report.table = aggregate(report.results);
  report.buckets = bucket_users(eligible_copy, config.tokenizer_id);
  if (!report.results.empty()) report.tradeoff = tradeoff_table(report.results, report.buckets, config.tradeoff_k);
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricsTable& table) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& row : table.rows) {
    for (int cutoff : kNdcgCutoffs) {
      out << to_string(row.method.family) << ',' << (row.method.use_reviews ? "true" : "false") << ','
          << (row.method.use_extractor ? "true" : "false") << ',' << (row.method.use_updater ? "true" : "false")
          << ',' << cutoff << ',' << format_fixed(row.ndcg_x100.at(cutoff), 6) << ','
          << format_fixed(row.mean_input_tokens, 6) << ',' << format_fixed(row.hallucination_rate, 6) << ','
          << format_fixed(row.repaired_rate, 6) << ',' << format_fixed(row.fallback_rate, 6) << ',' << row.n_users
          << ',' << row.n_sessions << '\n';
    }
  }
}

void write_tradeoff_csv(std::ostream& out, const std::vector<TradeoffRow>& rows) {
  out << kTradeoffCsvHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.bucket) << ',' << r.method.key() << ',' << format_fixed(r.ndcg_x100, 6) << ','
        << format_fixed(r.mean_input_tokens, 6) << '\n';
  }
}

std::string render_ndcg_table(const MetricsTable& table) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %8s %8s %8s %8s\n", "method", "N@1", "N@5", "N@10", "N@20");
  out << line;
  for (const auto& row : table.rows) {
    std::snprintf(line, sizeof line, "%-22s %8.2f %8.2f %8.2f %8.2f\n", row.method.key().c_str(),
                  row.ndcg_x100.at(1), row.ndcg_x100.at(5), row.ndcg_x100.at(10), row.ndcg_x100.at(20));
    out << line;
  }
  return out.str();
}

std::string render_component_table(const MetricsTable& table) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-11s %5s %7s %4s %4s %4s %8s %8s %8s %8s %10s\n", "family", "items", "reviews",
                "Rec.", "Ext.", "Upd.", "N@1", "N@5", "N@10", "N@20", "|T|");
  out << line;
  auto mark = [](bool on) { return on ? "x" : ""; };
  for (const auto& row : table.rows) {
    const auto& m = row.method;
    std::snprintf(line, sizeof line, "%-11s %5s %7s %4s %4s %4s %8.2f %8.2f %8.2f %8.2f %10.2f\n",
                  std::string(to_string(m.family)).c_str(), "x", mark(m.use_reviews), "x", mark(m.use_extractor),
                  mark(m.use_updater), row.ndcg_x100.at(1), row.ndcg_x100.at(5), row.ndcg_x100.at(10),
                  row.ndcg_x100.at(20), row.mean_input_tokens);
    out << line;
  }
  return out.str();
}

}  // namespace pure
