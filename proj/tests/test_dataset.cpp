#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <zlib.h>

#include "pure/dataset.hpp"
#include "pure/errors.hpp"
#include "support.hpp"

using namespace pure;
using pure::testing::rec;

TEST(ParseReviews, Empty) {
  std::istringstream in("");
  auto p = parse_reviews(in);
  EXPECT_TRUE(p.records.empty());
  EXPECT_EQ(p.skipped, 0u);
}

TEST(ParseReviews, SkipsMissingRating) {
  std::istringstream in(
      R"({"reviewerID":"u1","asin":"A1","reviewText":"fine","overall":5.0,"unixReviewTime":1136073600})"
      "\n"
      R"({"reviewerID":"u1","asin":"A2","reviewText":"meh","unixReviewTime":1136073700})"
      "\n"
      R"({"reviewerID":"u2","asin":"A1","overall":2,"unixReviewTime":5,"style":{"x":1}})"
      "\n");
  auto p = parse_reviews(in);
  ASSERT_EQ(p.records.size(), 2u);
  EXPECT_EQ(p.skipped, 1u);
  EXPECT_EQ(p.malformed_line_numbers, std::vector<std::size_t>{2});
  EXPECT_EQ(p.records[0].rating, 5);
  EXPECT_EQ(p.records[0].timestamp, 1136073600);
  EXPECT_EQ(p.records[0].text, "fine");
  EXPECT_EQ(p.records[1].text, "");
}

TEST(ParseReviews, MostlyGarbageIsFatal) {
  std::istringstream in("nope\n{]\n" R"({"reviewerID":"u","asin":"a","overall":3,"unixReviewTime":1})" "\n");
  EXPECT_THROW(parse_reviews(in), IngestError);
}

TEST(ParseReviews, InvalidUtf8Replaced) {
  std::string line = R"({"reviewerID":"u","asin":"a","overall":3,"unixReviewTime":1,"reviewText":"ok)";
  line += "\xff";
  line += R"("})";
  std::istringstream in(line + "\n");
  auto p = parse_reviews(in);
  ASSERT_EQ(p.records.size(), 1u);
  EXPECT_EQ(p.records[0].text, "ok\xEF\xBF\xBD");
}

TEST(JoinMetadata, DropsAndTrims) {
  std::istringstream meta(R"({"asin":"A1","title":"  Halo 3  "})" "\n" R"({"asin":"A3","title":""})" "\n");
  auto m = parse_metadata(meta);
  std::vector<ReviewRecord> rs = {rec("u", "A1", "", 5, 1), rec("u", "A2", "", 4, 2)};
  auto j = join_metadata(rs, m.titles);
  ASSERT_EQ(j.records.size(), 1u);
  EXPECT_EQ(j.dropped, 1u);
  EXPECT_EQ(j.records[0].title, "Halo 3");
}

TEST(BuildHistories, ThresholdAndTieBreak) {
  std::vector<ReviewRecord> rs = {rec("u1", "B09", "b", 5, 10), rec("u1", "A01", "a", 5, 10),
                                  rec("u1", "C", "c", 5, 5),    rec("u1", "D", "d", 5, 20),
                                  rec("u2", "A01", "a", 5, 1),  rec("u2", "B09", "b", 5, 2),
                                  rec("u2", "C", "c", 5, 3)};
  auto hs = build_histories(rs, 4);
  ASSERT_EQ(hs.size(), 1u);
  EXPECT_EQ(hs[0].user_id, "u1");
  EXPECT_EQ(hs[0].at(2).item_id, "A01");
  EXPECT_EQ(hs[0].at(3).item_id, "B09");
}

TEST(BuildHistories, ShuffledIsSortedAndDeduped) {
  std::vector<ReviewRecord> rs = {rec("u", "E", "e", 1, 50), rec("u", "A", "a", 1, 10), rec("u", "D", "d", 1, 40),
                                  rec("u", "B", "b", 1, 20), rec("u", "F", "f", 1, 60), rec("u", "C", "c", 1, 30),
                                  rec("u", "C", "dup", 2, 30)};
  auto hs = build_histories(rs, 4);
  ASSERT_EQ(hs.size(), 1u);
  ASSERT_EQ(hs[0].length(), 6u);
  for (std::size_t t = 2; t <= 6; ++t) EXPECT_LE(hs[0].at(t - 1).timestamp, hs[0].at(t).timestamp);
  EXPECT_EQ(hs[0].at(3).title, "c");
}

TEST(SampleCandidates, Contract) {
  auto users = pure::testing::synthetic_users(3, 6, 6, 1);
  auto pool = pure::testing::pool_with(users, 100);
  for (const auto& h : users) {
    std::set<std::string> mine;
    for (const auto& r : h.records) mine.insert(r.item_id);
    for (std::size_t t = 2; t <= h.length(); ++t) {
      auto s = sample_candidates(h, t, pool, session_seed(9, h.user_id, t));
      ASSERT_EQ(s.items.size(), 20u);
      EXPECT_EQ(s.truth().item_id, h.at(t).item_id);
      std::set<std::string> ids;
      for (std::size_t i = 0; i < s.items.size(); ++i) {
        ids.insert(s.items[i].item_id);
        if (i != s.truth_index) EXPECT_FALSE(mine.contains(s.items[i].item_id));
      }
      EXPECT_EQ(ids.size(), 20u);
      auto again = sample_candidates(h, t, pool, session_seed(9, h.user_id, t));
      EXPECT_EQ(again.items, s.items);
      EXPECT_EQ(again.truth_index, s.truth_index);
    }
  }
}

TEST(SampleCandidates, PoolTooSmall) {
  auto users = pure::testing::synthetic_users(1, 5, 5, 2);
  auto pool = pure::testing::pool_with(users, 18);
  EXPECT_THROW(sample_candidates(users[0], 3, pool, 1), ConfigError);
}

TEST(SampleCandidates, TruthPositionUniform) {
  auto users = pure::testing::synthetic_users(1, 5, 5, 3);
  auto pool = pure::testing::pool_with(users, 60);
  std::vector<int> hist(20, 0);
  const int n = 10000;
  for (int s = 0; s < n; ++s) ++hist[sample_candidates(users[0], 5, pool, static_cast<std::uint64_t>(s)).truth_index];
  const double p = 1.0 / 20, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  for (int c : hist) EXPECT_NEAR(c, mean, 3 * sigma + 1);
}

TEST(Histories, RoundTripAndIdempotentIngest) {
  auto users = pure::testing::synthetic_users(4, 4, 7, 5);
  std::ostringstream a;
  write_histories(a, users);
  std::istringstream in(a.str());
  auto back = read_histories(in);
  EXPECT_EQ(back, users);
  std::ostringstream b;
  write_histories(b, back);
  EXPECT_EQ(a.str(), b.str());
}

TEST(ReadMaybeGzip, Transparent) {
  pure::testing::TempDir dir("gz");
  auto plain = dir.path() / "x.jsonl";
  auto gz = dir.path() / "x.jsonl.gz";
  std::ofstream(plain) << "hello\nworld\n";
  gzFile f = gzopen(gz.c_str(), "wb");
  gzputs(f, "hello\nworld\n");
  gzclose(f);
  EXPECT_EQ(read_maybe_gzip(plain), "hello\nworld\n");
  EXPECT_EQ(read_maybe_gzip(gz), "hello\nworld\n");
  EXPECT_THROW(read_maybe_gzip(dir.path() / "missing"), IngestError);
}
