#include "pure/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <unordered_set>

#include "pure/errors.hpp"
#include "pure/prompt_kit.hpp"
#include "pure/ranking.hpp"
#include "pure/text_util.hpp"
#include "pure/tokenizer.hpp"

namespace pure {

using nlohmann::json;
namespace pm = prompt_markers;

namespace {

constexpr std::size_t kMinFeatureLength = 5;
constexpr std::size_t kMaxFeaturesPerReview = 8;

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string after(std::string_view line, std::string_view prefix) { return trim(line.substr(prefix.size())); }

// "[12] rest" -> rest, when the line opens with a bracketed number.
std::optional<std::string> strip_bracket_number(std::string_view line) {
  if (line.empty() || line[0] != '[') return std::nullopt;
  std::size_t i = 1;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 1 || i + 1 >= line.size() || line[i] != ']' || line[i + 1] != ' ') return std::nullopt;
  return std::string(line.substr(i + 2));
}

// "12. rest" -> rest.
std::optional<std::string> strip_list_number(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || i + 1 >= line.size() || line[i] != '.' || line[i + 1] != ' ') return std::nullopt;
  return std::string(line.substr(i + 2));
}

std::vector<std::string> parse_section(std::string_view value) {
  auto v = trim(value);
  if (v == pm::kEmptySection) return {};
  json arr = json::parse(v, nullptr, false);
  std::vector<std::string> out;
  if (!arr.is_array()) return out;
  for (const auto& e : arr) {
    if (e.is_string()) out.push_back(e.get<std::string>());
  }
  return out;
}

json mock_extract(const std::vector<std::string>& lines) {
  Extracted ext;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto rest = strip_bracket_number(lines[i]);
    if (!rest || !starts_with(*rest, pm::kRecordAsin) || i + 3 >= lines.size()) continue;
    if (!starts_with(lines[i + 1], pm::kRecordProduct) || !starts_with(lines[i + 2], pm::kRecordRating)) continue;
    std::string title = after(lines[i + 1], pm::kRecordProduct);
    int rating = std::atoi(after(lines[i + 2], pm::kRecordRating).c_str());
    std::string review = starts_with(lines[i + 3], trim(pm::kRecordReview))
                             ? trim(std::string_view(lines[i + 3]).substr(trim(pm::kRecordReview).size()))
                             : std::string();
    if (rating >= 4) ext.likes.push_back(title);
    if (rating <= 2) ext.dislikes.push_back(title);
    for (auto& f : mock_features(review)) ext.features.push_back(std::move(f));
    i += 3;
  }
  return json{{"likes", ext.likes}, {"dislikes", ext.dislikes}, {"key_features", ext.features}};
}

json mock_update(const std::vector<std::string>& lines) {
  std::vector<std::string> items;
  for (const auto& line : lines) {
    if (starts_with(line, "Update this list")) break;
    if (starts_with(line, pm::kListItem)) items.push_back(after(line, pm::kListItem));
  }
  return json{{"items", case_insensitive_dedup(items)}};
}

json mock_rank(const std::vector<std::string>& lines) {
  std::vector<std::string> titles, positives, negatives, history;
  bool has_profile = false, in_candidates = false;
  for (const auto& line : lines) {
    if (in_candidates) {
      if (auto title = strip_bracket_number(line)) {
        titles.push_back(trim(*title));
        continue;
      }
      if (!titles.empty()) break;
      continue;
    }
    if (line == pm::kCandidateHeader) {
      in_candidates = true;
    } else if (starts_with(line, pm::kPositive)) {
      has_profile = true;
      for (auto& s : parse_section(after(line, pm::kPositive))) positives.push_back(std::move(s));
    } else if (starts_with(line, pm::kFeatures)) {
      for (auto& s : parse_section(after(line, pm::kFeatures))) positives.push_back(std::move(s));
    } else if (starts_with(line, pm::kNegative)) {
      for (auto& s : parse_section(after(line, pm::kNegative))) negatives.push_back(std::move(s));
    } else if (auto item = strip_list_number(line)) {
      history.push_back(trim(*item));
    } else if (starts_with(line, pm::kHistoryReview)) {
      history.push_back(after(line, pm::kHistoryReview));
    } else if (starts_with(line, pm::kRecencyPrefix)) {
      history.push_back(after(line, pm::kRecencyPrefix));
    } else if (starts_with(line, pm::kIclPrefix)) {
      auto body = std::string_view(line).substr(pm::kIclPrefix.size());
      auto cut = body.find(pm::kIclMiddle);
      history.push_back(trim(body.substr(0, cut)));
    }
  }
  if (!has_profile) positives = std::move(history);
  auto order = overlap_rank(titles, positives, negatives);
  return json{{"ranking", labels_for(order)}};
}

}  // namespace

std::vector<std::string> mock_features(std::string_view review_text) {
  std::map<std::string, int> freq;
  for (auto& tok : alpha_tokens(review_text)) {
    if (tok.size() >= kMinFeatureLength) ++freq[tok];
  }
  std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < kMaxFeaturesPerReview; ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<std::string> case_insensitive_dedup(const std::vector<std::string>& items) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& item : items) {
    auto t = trim(item);
    if (t.empty()) continue;
    if (seen.insert(fold_key(t)).second) out.push_back(std::move(t));
  }
  return out;
}

ChatOutcome mock_complete(const ChatRequest& request) {
  const auto lines = lines_of(request.user_text);
  json value;
  switch (request.schema) {
    case SchemaId::Extract:
      value = mock_extract(lines);
      break;
    case SchemaId::UpdateList:
      value = mock_update(lines);
      break;
    case SchemaId::Rank20:
    case SchemaId::FreeRank:
      value = mock_rank(lines);
      break;
  }
  ChatOutcome out;
  out.raw_text = value.dump();
  out.parsed_value = std::move(value);
  out.prompt_tokens = count_tokens(request.system_text) + count_tokens(request.user_text);
  out.output_tokens = count_tokens(out.raw_text);
  out.attempts = 1;
  return out;
}

BackendReply MockBackend::send(const ChatRequest& request) {
  BackendReply reply;
  reply.text = mock_complete(request).raw_text;
  return reply;
}

}  // namespace pure
