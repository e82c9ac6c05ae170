#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "pure/commands.hpp"
#include "pure/errors.hpp"
#include "pure/run_config.hpp"
#include "support.hpp"

using namespace pure;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Qualifying users with 4, 5, 6, 15 and 15 reviews, one short user, one review without
// metadata, one malformed line.
void write_fixture(const std::filesystem::path& dir) {
  std::ofstream r(dir / "reviews.jsonl");
  int ts = 100;
  auto line = [&](const std::string& u, const std::string& a, int rating, const std::string& text) {
    r << json{{"reviewerID", u}, {"asin", a}, {"overall", rating}, {"unixReviewTime", ts++}, {"reviewText", text}}.dump()
      << "\n";
  };
  for (int i = 0; i < 4; ++i) line("ua", "A" + std::to_string(i), 5, "lovely puzzle design");
  for (int i = 0; i < 5; ++i) line("ub", "B" + std::to_string(i), 2, "boring racing");
  for (int i = 0; i < 6; ++i) line("uc", "C" + std::to_string(i), 4, "great story");
  for (int i = 0; i < 2; ++i) line("ud", "A" + std::to_string(i), 3, "");
  for (int i = 0; i < 30; ++i) line(i < 15 ? "ue" : "uf", "Z" + std::to_string(i), 3, "filler");
  line("ua", "NOMETA", 5, "x");
  r << "{broken\n";
  std::ofstream m(dir / "meta.jsonl");
  for (const auto& p : {"A", "B", "C"})
    for (int i = 0; i < 6; ++i)
      m << json{{"asin", std::string(p) + std::to_string(i)}, {"title", std::string(p) + " game " + std::to_string(i)}}.dump()
        << "\n";
  for (int i = 0; i < 30; ++i) m << json{{"asin", "Z" + std::to_string(i)}, {"title", "z"}}.dump() << "\n";
}

}  // namespace

TEST(Ingest, HandCountedSummary) {
  pure::testing::TempDir dir("ingest");
  write_fixture(dir.path());
  auto s = cmd_ingest(dir.path() / "reviews.jsonl", dir.path() / "meta.jsonl", dir.path() / "h.jsonl");
  EXPECT_EQ(s.review_lines, 49u);
  EXPECT_EQ(s.reviews_skipped, 1u);
  EXPECT_EQ(s.dropped_no_metadata, 1u);
  EXPECT_EQ(s.users, 5u);
  EXPECT_EQ(s.users_excluded, 1u);
  EXPECT_EQ(s.interactions, 45u);
  EXPECT_EQ(s.items, 45u);  // items of qualifying users only
  EXPECT_EQ(s.continuous_sessions, 1u + 2u + 3u + 12u + 12u);
  EXPECT_EQ(s.oneshot_sessions, 5u);
  auto again = cmd_ingest(dir.path() / "reviews.jsonl", dir.path() / "meta.jsonl", dir.path() / "h2.jsonl");
  EXPECT_EQ(again.output_digest, s.output_digest);
  EXPECT_EQ(slurp(dir.path() / "h.jsonl"), slurp(dir.path() / "h2.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "h.jsonl.summary.json"));
}

TEST(Ingest, EmptyMetadataDropsEveryone) {
  pure::testing::TempDir dir("ingest_empty");
  write_fixture(dir.path());
  std::ofstream(dir.path() / "empty.jsonl");
  auto s = cmd_ingest(dir.path() / "reviews.jsonl", dir.path() / "empty.jsonl", dir.path() / "h.jsonl");
  EXPECT_EQ(s.users, 0u);
  EXPECT_EQ(s.dropped_no_metadata, 48u);
  EXPECT_TRUE(s.to_json().contains("note"));
}

TEST(Config, FieldDiagnostics) {
  json j{{"run_id", "r"}, {"history_path", "h"}, {"output_dir", "o"}, {"methods", {"recency+ext", "bogus"}},
         {"tradeoff_k", 3}, {"colour", "red"}};
  try {
    parse_run_config(j, ".");
    FAIL();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("methods: unknown method 'bogus'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("colour: unknown field"), std::string::npos) << msg;
  }
  try {
    parse_run_config(json{{"run_id", "r"}, {"history_path", "h"}, {"output_dir", "o"}, {"tradeoff_k", 3}}, ".");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tradeoff_k"), std::string::npos);
  }
}

TEST(Config, DefaultsAndAll) {
  auto cfg = parse_run_config(json{{"run_id", "r"}, {"history_path", "h.jsonl"}, {"output_dir", "out"}}, "/base");
  EXPECT_EQ(cfg.methods.size(), 12u);
  EXPECT_EQ(cfg.history_path, "/base/h.jsonl");
  EXPECT_EQ(cfg.cache_dir, "/base/out/cache");
  EXPECT_EQ(cfg.eval.first_target_index, 4u);
  EXPECT_EQ(cfg.backend.kind, "mock");
  auto all = parse_run_config(json{{"run_id", "r"}, {"history_path", "h"}, {"output_dir", "o"}, {"methods", {"all"}}}, ".");
  EXPECT_EQ(all.methods, full_method_grid());
}

class RunFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    write_fixture(dir.path());
    cmd_ingest(dir.path() / "reviews.jsonl", dir.path() / "meta.jsonl", dir.path() / "h.jsonl");
  }
  RunConfig config(const std::string& run_id) {
    return parse_run_config(json{{"run_id", run_id}, {"history_path", "h.jsonl"}, {"output_dir", "out"}}, dir.path());
  }
  pure::testing::TempDir dir{"run"};
};

TEST_F(RunFixture, RunReportAndWarmCache) {
  std::ostringstream log;
  ASSERT_EQ(cmd_run(config("r1"), log), kExitOk) << log.str();
  const auto run_dir = dir.path() / "out" / "r1";
  for (const auto* f : {"metrics_r1.csv", "tradeoff_r1.csv", "manifest_r1.jsonl", "buckets_r1.json"})
    EXPECT_TRUE(std::filesystem::exists(run_dir / f)) << f;
  const auto metrics = slurp(run_dir / "metrics_r1.csv");
  EXPECT_TRUE(metrics.starts_with(std::string(kMetricsCsvHeader) + "\n"));

  auto counting = std::make_shared<pure::testing::CountingMock>();
  ASSERT_EQ(cmd_run(config("r1"), log, counting), kExitOk);
  EXPECT_EQ(counting->calls.load(), 0);
  EXPECT_EQ(slurp(run_dir / "metrics_r1.csv"), metrics);

  std::ostringstream out, err;
  EXPECT_EQ(cmd_report(dir.path() / "out", "r1", out, err), kExitOk);
  EXPECT_NE(out.str().find("recency+ext+upd"), std::string::npos);
  std::ostringstream csv;
  EXPECT_EQ(cmd_report(dir.path() / "out", "r1", csv, err, true), kExitOk);
  EXPECT_EQ(csv.str(), metrics);
  // report is read-only
  EXPECT_EQ(slurp(run_dir / "metrics_r1.csv"), metrics);
  std::ostringstream plot;
  EXPECT_EQ(cmd_plot_data(dir.path() / "out", "r1", plot, err), kExitOk);
  EXPECT_EQ(plot.str(), slurp(run_dir / "tradeoff_r1.csv"));

  auto manifest = ManifestWriter(run_dir / "manifest_r1.jsonl").read();
  ASSERT_GE(manifest.size(), 4u);
  EXPECT_EQ(manifest[0]["prompt_version"], "pure-prompts-v1");
  EXPECT_EQ(manifest[0]["tokenizer_id"], "whitespace");
  EXPECT_EQ(manifest[1]["event"], "finish");
  EXPECT_GT(manifest[1]["counters"]["sessions"].get<int>(), 0);
}

TEST_F(RunFixture, ExitCodes) {
  std::ostringstream log, out;
  auto cfg = config("r2");
  cfg.history_path = dir.path() / "missing.jsonl";
  EXPECT_EQ(cmd_run(cfg, log), kExitConfig);
  EXPECT_EQ(cmd_report(dir.path() / "out", "nope", out, log), kExitConfig);

  ASSERT_EQ(cmd_run(config("r3"), log), kExitOk);
  auto changed = config("r3");
  changed.eval.run_seed = 99;
  EXPECT_EQ(cmd_run(changed, log), kExitConfig);

  auto cold = config("r4");
  cold.cache_dir = dir.path() / "cold_cache";  // the shared cache is already warm
  EXPECT_EQ(cmd_run(cold, log, std::make_shared<pure::testing::FailingAfterN>(3)), kExitBackend);
  EXPECT_EQ(cmd_run(cold, log), kExitOk);
}

TEST_F(RunFixture, EmptyRunReport) {
  std::ostringstream log, out;
  auto cfg = config("r5");
  cfg.eval.first_target_index = 50;
  ASSERT_EQ(cmd_run(cfg, log), kExitOk) << log.str();
  EXPECT_EQ(cmd_report(dir.path() / "out", "r5", out, log), kExitOk);
  EXPECT_NE(out.str().find("no sessions"), std::string::npos);
}
