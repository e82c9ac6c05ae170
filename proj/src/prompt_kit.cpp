#include "pure/prompt_kit.hpp"

#include <nlohmann/json.hpp>

#include "pure/errors.hpp"
#include "pure/llm_gateway.hpp"
#include "pure/text_util.hpp"

namespace pure {

namespace pm = prompt_markers;

std::string_view to_string(MethodFamily family) {
  switch (family) {
    case MethodFamily::Sequential:
      return "sequential";
    case MethodFamily::Recency:
      return "recency";
    case MethodFamily::ICL:
      return "icl";
  }
  return "unknown";
}

std::string_view to_string(ListKind kind) {
  switch (kind) {
    case ListKind::Likes:
      return "likes";
    case ListKind::Dislikes:
      return "dislikes";
    case ListKind::Features:
      return "key features";
  }
  return "unknown";
}

void MethodSpec::validate() const {
  if (use_updater && !use_extractor) throw ConfigError("method " + key() + ": updater requires the extractor");
  if (use_extractor && !use_reviews) throw ConfigError("method " + key() + ": extractor requires reviews");
}

std::string MethodSpec::key() const {
  std::string k(to_string(family));
  if (use_extractor) {
    k += "+ext";
    if (use_updater) k += "+upd";
  } else if (use_reviews) {
    k += "+reviews";
  }
  return k;
}

MethodSpec MethodSpec::parse(std::string_view key) {
  for (const auto& m : full_method_grid()) {
    if (m.key() == key) return m;
  }
  throw ConfigError("unknown method '" + std::string(key) +
                    "' (expected <sequential|recency|icl>[+reviews|+ext|+ext+upd])");
}

std::vector<MethodSpec> full_method_grid() {
  std::vector<MethodSpec> grid;
  for (auto family : {MethodFamily::Sequential, MethodFamily::Recency, MethodFamily::ICL}) {
    grid.push_back({family, false, false, false});
    grid.push_back({family, true, false, false});
    grid.push_back({family, true, true, false});
    grid.push_back({family, true, true, true});
  }
  return grid;
}

std::string system_prompt() {
  return "You are a recommendation assistant. Answer every request with a single JSON object "
         "that follows the requested schema and nothing else.";
}

std::string render_section(std::span<const std::string> items) {
  if (items.empty()) return std::string(pm::kEmptySection);
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += nlohmann::json(collapse_whitespace(items[i])).dump();
  }
  out += "]";
  return out;
}

std::string render_extractor(std::span<const ReviewRecord> records) {
  if (records.empty()) throw ContractViolation("render_extractor needs at least one review");
  std::string out = "I purchased the following products and left reviews in chronological order:\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out += "[" + std::to_string(i + 1) + "] " + std::string(pm::kRecordAsin) + collapse_whitespace(r.item_id) + "\n";
    out += std::string(pm::kRecordProduct) + collapse_whitespace(r.title) + "\n";
    out += std::string(pm::kRecordRating) + std::to_string(r.rating) + "\n";
    out += std::string(pm::kRecordReview) + collapse_whitespace(r.text) + "\n";
  }
  out += "Analyze user's likes/dislikes/key features by referring to their reviews.\n";
  out += schema_instruction(SchemaId::Extract);
  return out;
}

std::string render_updater(std::span<const std::string> items, ListKind kind) {
  std::string out = "You are given a list:\n";
  if (items.empty()) out += "(empty)\n";
  for (const auto& item : items) out += std::string(pm::kListItem) + collapse_whitespace(item) + "\n";
  switch (kind) {
    case ListKind::Likes:
      out += "The list describes what the user likes.\n";
      break;
    case ListKind::Dislikes:
      out += "The list describes what the user dislikes.\n";
      break;
    case ListKind::Features:
      out += "The list describes the user's key features.\n";
      break;
  }
  out += "Update this list by removing redundant or overlapping information. "
         "Note that crucial information should be preserved.\n";
  out += schema_instruction(SchemaId::UpdateList);
  return out;
}

namespace {

void append_item(std::string& out, std::size_t number, const ReviewRecord& r, bool with_review) {
  out += std::to_string(number) + ". " + collapse_whitespace(r.title) + "\n";
  if (with_review) {
    auto text = collapse_whitespace(r.text);
    if (!text.empty()) out += std::string(pm::kHistoryReview) + text + "\n";
  }
}

void append_history(std::string& out, MethodFamily family, std::span<const ReviewRecord> history, bool with_reviews) {
  if (history.empty()) throw ContractViolation("ranking prompt needs at least one purchase");
  if (family == MethodFamily::ICL) {
    if (history.size() < 2) throw ContractViolation("ICL prompt needs at least two purchases");
    const auto& recent = history.back();
    out += "I've purchased the following products:\n";
    for (std::size_t i = 0; i + 1 < history.size(); ++i) append_item(out, i + 1, history[i], with_reviews);
    auto title = collapse_whitespace(recent.title);
    out += std::string(pm::kIclPrefix) + title + std::string(pm::kIclMiddle) + title + ".\n";
    if (with_reviews) {
      auto text = collapse_whitespace(recent.text);
      if (!text.empty()) out += std::string(pm::kHistoryReview) + text + "\n";
    }
    return;
  }
  out += "I've purchased the following products in chronological order:\n";
  for (std::size_t i = 0; i < history.size(); ++i) append_item(out, i + 1, history[i], with_reviews);
  if (family == MethodFamily::Recency) {
    out += std::string(pm::kRecencyPrefix) + collapse_whitespace(history.back().title) + ".\n";
  }
}

void append_candidates(std::string& out, const CandidateSet& candidates) {
  if (candidates.items.size() != kSlateSize) {
    throw ContractViolation("candidate slate must hold " + std::to_string(kSlateSize) + " items, got " +
                            std::to_string(candidates.items.size()));
  }
  out += std::string(pm::kCandidateHeader) + "\n";
  for (std::size_t i = 0; i < candidates.items.size(); ++i) {
    out += "[" + std::to_string(i + 1) + "] " + collapse_whitespace(candidates.items[i].title) + "\n";
  }
  out += "Based on these inputs, rank the candidate list from 1 to 20 by evaluating their likelihood of being "
         "purchased.\n";
  out += schema_instruction(SchemaId::Rank20);
}

}  // namespace

std::string render_recommender(const Profile& profile, std::span<const ReviewRecord> purchased,
                               const CandidateSet& candidates, MethodFamily family) {
  std::string out;
  append_history(out, family, purchased, /*with_reviews=*/false);
  out += std::string(pm::kPositive) + render_section(profile.likes) + "\n";
  out += std::string(pm::kNegative) + render_section(profile.dislikes) + "\n";
  out += std::string(pm::kFeatures) + render_section(profile.features) + "\n";
  append_candidates(out, candidates);
  return out;
}

std::string render_baseline(const MethodSpec& spec, std::span<const ReviewRecord> history,
                            const CandidateSet& candidates) {
  spec.validate();
  if (spec.use_extractor) throw ContractViolation("render_baseline called for an extractor method");
  std::string out;
  append_history(out, spec.family, history, spec.use_reviews);
  append_candidates(out, candidates);
  return out;
}

}  // namespace pure
