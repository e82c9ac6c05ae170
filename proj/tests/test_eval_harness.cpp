#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "pure/errors.hpp"
#include "pure/eval_harness.hpp"
#include "pure/mock_backend.hpp"
#include "support.hpp"

using namespace pure;

namespace {

SessionResult session(const std::string& user, std::size_t t, int truth_rank, std::int64_t tokens = 100,
                      MethodSpec m = {}) {
  SessionResult r;
  r.user_id = user;
  r.target_index = t;
  r.method = m;
  r.ranking.truth_rank = truth_rank;
  for (int k : kNdcgCutoffs) r.ndcg[k] = ndcg_at_k(truth_rank, k);
  r.recommender_prompt_tokens = tokens;
  return r;
}

struct Fixture {
  std::vector<UserHistory> users = pure::testing::synthetic_users(6, 4, 9, 21);
  ItemPool pool = pure::testing::pool_with(users, 80);
};

}  // namespace

TEST(Continuous, SessionCounts) {
  Fixture f;
  Gateway gw(std::make_shared<MockBackend>(), pure::testing::quiet_options());
  EvalConfig cfg;
  for (const auto& h : f.users) {
    auto rs = run_user_continuous(h, {MethodFamily::Recency, true, true, true}, gw, f.pool, cfg);
    ASSERT_EQ(rs.size(), h.length() - 3);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      EXPECT_EQ(rs[i].target_index, 4 + i);
      EXPECT_EQ(rs[i].truth_item_id, h.at(4 + i).item_id);
      for (const auto& [k, v] : rs[i].ndcg) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Continuous, FirstTargetFiveReading) {
  Fixture f;
  Gateway gw(std::make_shared<MockBackend>(), pure::testing::quiet_options());
  EvalConfig cfg;
  cfg.first_target_index = 5;
  auto h = f.users[0];
  while (h.length() < 9) h.records.push_back(h.records.back());
  h.records.resize(9);
  for (std::size_t t = 1; t <= 9; ++t) h.records[t - 1].item_id = "Z" + std::to_string(t);
  EXPECT_EQ(run_user_continuous(h, {}, gw, pure::testing::pool_with({h}, 40), cfg).size(), 5u);
}

TEST(OneShot, EqualsLastContinuousSession) {
  Fixture f;
  Gateway gw(std::make_shared<MockBackend>(), pure::testing::quiet_options());
  for (const auto& m : full_method_grid()) {
    for (const auto& h : f.users) {
      EvalConfig cfg;
      cfg.first_target_index = h.length();
      auto cont = run_user_continuous(h, m, gw, f.pool, cfg);
      auto one = run_user_oneshot(h, m, gw, f.pool, EvalConfig{});
      ASSERT_EQ(cont.size(), 1u);
      EXPECT_EQ(one, cont.back());
      EXPECT_EQ(one.target_index, h.length());
    }
  }
}

TEST(Harness, ItemsOnlyNeverCallsProfileComponents) {
  Fixture f;
  std::vector<SchemaId> seen;
  std::mutex mu;
  Gateway gw(std::make_shared<MockBackend>(), pure::testing::quiet_options());
  gw.set_request_observer([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    seen.push_back(r.schema);
  });
  for (auto fam : {MethodFamily::Sequential, MethodFamily::Recency, MethodFamily::ICL}) {
    for (bool reviews : {false, true}) {
      for (const auto& h : f.users) run_user_continuous(h, {fam, reviews}, gw, f.pool, EvalConfig{});
    }
  }
  EXPECT_FALSE(seen.empty());
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](SchemaId s) { return s == SchemaId::Rank20; }));
}

TEST(Harness, ParseExhaustedFallsBackToSlateOrder) {
  Fixture f;
  auto backend = std::make_shared<pure::testing::ScriptedBackend>(
      std::vector<pure::testing::ScriptedBackend::Step>(3, BackendReply{"not json", {}, {}}));
  Gateway gw(backend, pure::testing::quiet_options());
  UserHistory h = f.users[0];
  h.records.resize(4);
  auto rs = run_user_continuous(h, {}, gw, f.pool, EvalConfig{});
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].parse_fallbacks, 1);
  EXPECT_TRUE(rs[0].ranking.repaired);
  EXPECT_EQ(static_cast<std::size_t>(rs[0].ranking.truth_rank),
            sample_candidates(h, 4, f.pool, session_seed(0, h.user_id, 4)).truth_index + 1);
  EXPECT_GT(rs[0].recommender_prompt_tokens, 0);
}

TEST(Aggregate, Examples) {
  auto t = aggregate({session("a", 4, 1)});
  for (int k : kNdcgCutoffs) EXPECT_DOUBLE_EQ(t.rows[0].ndcg_x100.at(k), 100.0);

  // user A {1.0, 0.0} and user B {1.0} at k=1 -> (0.5 + 1.0) / 2
  auto t2 = aggregate({session("A", 4, 1, 10), session("A", 5, 2, 20), session("B", 4, 1, 60)});
  EXPECT_DOUBLE_EQ(t2.rows[0].ndcg_x100.at(1), 75.0);
  EXPECT_DOUBLE_EQ(t2.rows[0].mean_input_tokens, 30.0);
  EXPECT_EQ(t2.rows[0].n_users, 2u);
  EXPECT_EQ(t2.rows[0].n_sessions, 3u);
  EXPECT_THROW(aggregate({}), ContractViolation);
}

TEST(Aggregate, OrderInvariant) {
  std::vector<SessionResult> rs;
  std::mt19937 rng(3);
  for (int u = 0; u < 7; ++u)
    for (int t = 4; t < 4 + u % 4 + 1; ++t)
      for (const auto& m : full_method_grid())
        rs.push_back(session("u" + std::to_string(u), t, 1 + rng() % 20, rng() % 500, m));
  std::ostringstream a, b;
  write_metrics_csv(a, aggregate(rs));
  std::shuffle(rs.begin(), rs.end(), rng);
  write_metrics_csv(b, aggregate(rs));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(aggregate(rs).rows.size(), 12u);
}

TEST(Buckets, Boundaries) {
  auto make = [](const std::string& id, std::size_t tokens) {
    UserHistory h;
    h.user_id = id;
    std::string text;
    for (std::size_t i = 0; i < tokens; ++i) text += "w ";
    h.records.push_back(pure::testing::rec(id, "I" + id, "t", 5, 1, text));
    return h;
  };
  std::vector<UserHistory> hs = {make("s0", 0),    make("s1", 250),  make("s2", 499),
                                 make("m0", 500),  make("m1", 750),  make("m2", 999),
                                 make("l0", 1000), make("l1", 1500), make("l2", 1999),
                                 make("x", 2000)};
  auto b = bucket_users(hs);
  EXPECT_EQ(b.users[Bucket::Short], (std::vector<std::string>{"s0", "s1", "s2"}));
  EXPECT_EQ(b.users[Bucket::Middle], (std::vector<std::string>{"m0", "m1", "m2"}));
  EXPECT_EQ(b.users[Bucket::Long], (std::vector<std::string>{"l0", "l1", "l2"}));
  EXPECT_EQ(b.excluded, 1u);
}

TEST(Matrix, FullGridRowsAndCsv) {
  auto users = pure::testing::synthetic_users(10, 4, 8, 31);
  Gateway gw(std::make_shared<MockBackend>(), pure::testing::quiet_options());
  EvalConfig cfg;
  cfg.workers = 4;
  auto report = run_matrix(users, full_method_grid(), gw, cfg);
  ASSERT_EQ(report.table.rows.size(), 12u);
  std::ostringstream csv;
  write_metrics_csv(csv, report.table);
  std::string header;
  std::getline(std::istringstream(csv.str()) >> std::ws, header);
  EXPECT_EQ(header, kMetricsCsvHeader);
  std::ostringstream plot;
  write_tradeoff_csv(plot, report.tradeoff);
  EXPECT_TRUE(plot.str().starts_with(std::string(kTradeoffCsvHeader) + "\n"));
  EXPECT_FALSE(report.tradeoff.empty());

  cfg.workers = 1;
  auto serial = run_matrix(users, full_method_grid(), gw, cfg);
  std::ostringstream csv2;
  write_metrics_csv(csv2, serial.table);
  EXPECT_EQ(csv.str(), csv2.str());
}

TEST(SessionResult, JsonRoundTrip) {
  auto r = session("u", 7, 3, 42, MethodSpec::parse("icl+ext+upd"));
  r.ranking.order = {2, 0, 1};
  r.extractor_tokens = 5;
  r.truth_item_id = "B1";
  EXPECT_EQ(SessionResult::from_json(r.to_json()), r);
}
