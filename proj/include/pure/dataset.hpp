#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace pure {

inline constexpr std::size_t kSlateSize = 20;

// One user-item interaction. `title` is filled in by join_metadata.
struct ReviewRecord {
  std::string user_id;
  std::string item_id;
  std::string title;
  std::string text;
  int rating = 0;
  std::int64_t timestamp = 0;

  bool operator==(const ReviewRecord&) const = default;
};

// Chronological interactions of one user, sorted by (timestamp, item_id).
struct UserHistory {
  std::string user_id;
  std::vector<ReviewRecord> records;

  std::size_t length() const { return records.size(); }
  // 1-based timestep accessor.
  const ReviewRecord& at(std::size_t t) const { return records.at(t - 1); }

  bool operator==(const UserHistory&) const = default;
};

struct CatalogItem {
  std::string item_id;
  std::string title;

  bool operator==(const CatalogItem&) const = default;
};

// 20-item slate with exactly one ground-truth entry.
struct CandidateSet {
  std::vector<CatalogItem> items;
  std::size_t truth_index = 0;
  std::uint64_t seed_tag = 0;

  const CatalogItem& truth() const { return items.at(truth_index); }
};

// Distinct items sorted by item_id.
using ItemPool = std::vector<CatalogItem>;

struct ReviewParse {
  std::vector<ReviewRecord> records;
  std::size_t lines = 0;    // non-blank lines seen
  std::size_t skipped = 0;  // malformed lines
  std::vector<std::size_t> malformed_line_numbers;  // first few, 1-based
};

struct MetadataParse {
  std::unordered_map<std::string, std::string> titles;
  std::size_t lines = 0;
  std::size_t skipped = 0;
};

struct JoinResult {
  std::vector<ReviewRecord> records;
  std::size_t dropped = 0;
};

// Amazon 2018 field names: reviewerID, asin, reviewText, overall, unixReviewTime.
// Throws IngestError when more than half of the non-blank lines are malformed.
ReviewParse parse_reviews(std::istream& in);

// Lines with fields asin and title; entries with an empty title are skipped.
MetadataParse parse_metadata(std::istream& in);

JoinResult join_metadata(std::vector<ReviewRecord> records,
                         const std::unordered_map<std::string, std::string>& titles);

std::vector<UserHistory> build_histories(std::vector<ReviewRecord> records,
                                         std::size_t min_interactions);

ItemPool build_item_pool(const std::vector<UserHistory>& histories);

// Uniform draw of 19 negatives from pool minus every item the user ever touched,
// followed by a seeded shuffle. `target_index` is a 1-based timestep.
CandidateSet sample_candidates(const UserHistory& history, std::size_t target_index,
                               const ItemPool& pool, std::uint64_t seed);

// Per-session seed derived from (run_seed, user_id, target_index).
std::uint64_t session_seed(std::uint64_t run_seed, const std::string& user_id,
                           std::size_t target_index);

// Normalized history file: one JSON object per user per line,
// {"user_id":..., "records":[{"item_id","title","text","rating","timestamp"}, ...]}.
void write_histories(std::ostream& out, const std::vector<UserHistory>& histories);
std::vector<UserHistory> read_histories(std::istream& in);

// Reads a whole file, transparently gunzipping. Throws IngestError.
std::string read_maybe_gzip(const std::filesystem::path& path);

}  // namespace pure
