#include "pure/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_set>

#include "pure/errors.hpp"
#include "pure/random.hpp"
#include "pure/text_util.hpp"

namespace pure {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxReportedLines = 10;

std::optional<std::string> string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<double> number_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    try {
      std::size_t used = 0;
      const auto& s = it->get_ref<const std::string&>();
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

std::optional<ReviewRecord> parse_review_line(const std::string& line) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!obj.is_object()) return std::nullopt;
  auto user = string_field(obj, "reviewerID");
  auto item = string_field(obj, "asin");
  auto rating = number_field(obj, "overall");
  auto ts = number_field(obj, "unixReviewTime");
  if (!user || !item || !rating || !ts) return std::nullopt;
  if (trim(*user).empty() || trim(*item).empty()) return std::nullopt;
  if (*rating != std::floor(*rating) || *rating < 1 || *rating > 5) return std::nullopt;
  if (*ts != std::floor(*ts) || *ts < 0) return std::nullopt;

  ReviewRecord r;
  r.user_id = trim(*user);
  r.item_id = trim(*item);
  r.text = string_field(obj, "reviewText").value_or("");
  r.rating = static_cast<int>(*rating);
  r.timestamp = static_cast<std::int64_t>(*ts);
  return r;
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    fn(number, sanitize_utf8(line));
  }
  if (in.bad()) throw IngestError("stream read failed at line " + std::to_string(number));
}

}  // namespace

ReviewParse parse_reviews(std::istream& in) {
  if (!in) throw IngestError("review stream is not readable");
  ReviewParse out;
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    ++out.lines;
    if (auto r = parse_review_line(line)) {
      out.records.push_back(std::move(*r));
    } else {
      ++out.skipped;
      if (out.malformed_line_numbers.size() < kMaxReportedLines) out.malformed_line_numbers.push_back(number);
    }
  });
  if (out.skipped * 2 > out.lines) {
    std::string where;
    for (auto n : out.malformed_line_numbers) where += (where.empty() ? "" : ",") + std::to_string(n);
    throw IngestError(std::to_string(out.skipped) + " of " + std::to_string(out.lines) +
                      " review lines are malformed (first at lines " + where + ")");
  }
  return out;
}

MetadataParse parse_metadata(std::istream& in) {
  if (!in) throw IngestError("metadata stream is not readable");
  MetadataParse out;
  for_each_line(in, [&](std::size_t, const std::string& line) {
    ++out.lines;
    json obj = json::parse(line, nullptr, false);
    std::optional<std::string> asin, title;
    if (obj.is_object()) {
      asin = string_field(obj, "asin");
      title = string_field(obj, "title");
    }
    if (!asin || !title || trim(*asin).empty() || collapse_whitespace(*title).empty()) {
      ++out.skipped;
      return;
    }
    // first occurrence wins
    out.titles.emplace(trim(*asin), collapse_whitespace(*title));
  });
  if (out.skipped * 2 > out.lines) {
    throw IngestError(std::to_string(out.skipped) + " of " + std::to_string(out.lines) +
                      " metadata lines are malformed");
  }
  return out;
}

JoinResult join_metadata(std::vector<ReviewRecord> records,
                         const std::unordered_map<std::string, std::string>& titles) {
  JoinResult out;
  out.records.reserve(records.size());
  for (auto& r : records) {
    auto it = titles.find(r.item_id);
    std::string title = it == titles.end() ? std::string() : collapse_whitespace(it->second);
    if (title.empty()) {
      ++out.dropped;
      continue;
    }
    r.title = std::move(title);
    out.records.push_back(std::move(r));
  }
  return out;
}

std::vector<UserHistory> build_histories(std::vector<ReviewRecord> records,
                                         std::size_t min_interactions) {
  // Stable sort keeps input order among exact duplicates so the first occurrence survives.
  std::stable_sort(records.begin(), records.end(), [](const ReviewRecord& a, const ReviewRecord& b) {
    return std::tie(a.user_id, a.timestamp, a.item_id) < std::tie(b.user_id, b.timestamp, b.item_id);
  });

  std::vector<UserHistory> out;
  for (std::size_t i = 0; i < records.size();) {
    UserHistory h;
    h.user_id = records[i].user_id;
    std::size_t j = i;
    for (; j < records.size() && records[j].user_id == h.user_id; ++j) {
      if (!h.records.empty() && h.records.back().timestamp == records[j].timestamp &&
          h.records.back().item_id == records[j].item_id) {
        continue;
      }
      h.records.push_back(std::move(records[j]));
    }
    if (h.records.size() >= min_interactions) out.push_back(std::move(h));
    i = j;
  }
  return out;
}

ItemPool build_item_pool(const std::vector<UserHistory>& histories) {
  std::map<std::string, std::string> items;
  for (const auto& h : histories) {
    for (const auto& r : h.records) items.emplace(r.item_id, r.title);
  }
  ItemPool pool;
  pool.reserve(items.size());
  for (auto& [id, title] : items) pool.push_back({id, title});
  return pool;
}

CandidateSet sample_candidates(const UserHistory& history, std::size_t target_index,
                               const ItemPool& pool, std::uint64_t seed) {
  if (target_index < 1 || target_index > history.length()) {
    throw ContractViolation("target_index " + std::to_string(target_index) + " outside history of length " +
                            std::to_string(history.length()));
  }
  std::unordered_set<std::string> touched;
  for (const auto& r : history.records) touched.insert(r.item_id);

  std::vector<std::size_t> eligible;
  eligible.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!touched.contains(pool[i].item_id)) eligible.push_back(i);
  }
  constexpr std::size_t kNegatives = kSlateSize - 1;
  if (eligible.size() < kNegatives) {
    throw ConfigError("item pool too small for user " + history.user_id + ": " + std::to_string(eligible.size()) +
                      " non-interacted items, need " + std::to_string(kNegatives));
  }

  SplitMix64 rng(seed);
  // partial Fisher-Yates over the eligible indices
  for (std::size_t i = 0; i < kNegatives; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }

  const auto& truth = history.at(target_index);
  CandidateSet slate;
  slate.seed_tag = seed;
  slate.items.reserve(kSlateSize);
  slate.items.push_back({truth.item_id, truth.title});
  for (std::size_t i = 0; i < kNegatives; ++i) slate.items.push_back(pool[eligible[i]]);

  std::vector<std::size_t> order(kSlateSize);
  for (std::size_t i = 0; i < kSlateSize; ++i) order[i] = i;
  for (std::size_t i = kSlateSize - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<CatalogItem> shuffled(kSlateSize);
  for (std::size_t pos = 0; pos < kSlateSize; ++pos) {
    shuffled[pos] = slate.items[order[pos]];
    if (order[pos] == 0) slate.truth_index = pos;
  }
  slate.items = std::move(shuffled);
  return slate;
}

std::uint64_t session_seed(std::uint64_t run_seed, const std::string& user_id, std::size_t target_index) {
  std::string preimage = std::to_string(run_seed);
  preimage.push_back('\x1f');
  preimage += user_id;
  preimage.push_back('\x1f');
  preimage += std::to_string(target_index);
  return fnv1a64(preimage);
}

void write_histories(std::ostream& out, const std::vector<UserHistory>& histories) {
  for (const auto& h : histories) {
    json records = json::array();
    for (const auto& r : h.records) {
      records.push_back({{"item_id", r.item_id},
                         {"title", r.title},
                         {"text", r.text},
                         {"rating", r.rating},
                         {"timestamp", r.timestamp}});
    }
    out << json{{"user_id", h.user_id}, {"records", std::move(records)}}.dump() << '\n';
  }
}

std::vector<UserHistory> read_histories(std::istream& in) {
  if (!in) throw IngestError("history stream is not readable");
  std::vector<UserHistory> out;
  for_each_line(in, [&](std::size_t number, const std::string& line) {
    try {
      json obj = json::parse(line);
      UserHistory h;
      h.user_id = obj.at("user_id").get<std::string>();
      for (const auto& r : obj.at("records")) {
        ReviewRecord rec;
        rec.user_id = h.user_id;
        rec.item_id = r.at("item_id").get<std::string>();
        rec.title = r.at("title").get<std::string>();
        rec.text = r.at("text").get<std::string>();
        rec.rating = r.at("rating").get<int>();
        rec.timestamp = r.at("timestamp").get<std::int64_t>();
        h.records.push_back(std::move(rec));
      }
      out.push_back(std::move(h));
    } catch (const json::exception& e) {
      throw IngestError("history file line " + std::to_string(number) + ": " + e.what());
    }
  });
  return out;
}

std::string read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IngestError("cannot open " + path.string());
  std::string out;
  std::vector<char> buf(1 << 16);
  for (;;) {
    int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int err = 0;
      std::string msg = gzerror(f, &err);
      gzclose(f);
      throw IngestError("read error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.append(buf.data(), static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

}  // namespace pure
