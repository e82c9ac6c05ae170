#pragma once

#include <span>
#include <string>
#include <string_view>

#include "pure/dataset.hpp"
#include "pure/profile.hpp"

namespace pure {

// Bumped whenever any rendered prompt changes byte-wise; part of every cache key.
inline constexpr std::string_view kPromptVersion = "pure-prompts-v1";

enum class MethodFamily { Sequential, Recency, ICL };

std::string_view to_string(MethodFamily family);

// One row of the method grid. Valid combinations:
//   items only; items + raw reviews; + extractor; + extractor + updater.
struct MethodSpec {
  MethodFamily family = MethodFamily::Sequential;
  bool use_reviews = false;
  bool use_extractor = false;
  bool use_updater = false;

  bool operator==(const MethodSpec&) const = default;

  // Throws ConfigError on an impossible combination.
  void validate() const;

  // Stable identifier, e.g. "recency", "recency+reviews", "recency+ext", "recency+ext+upd".
  std::string key() const;

  // Inverse of key(); throws ConfigError on unknown names.
  static MethodSpec parse(std::string_view key);
};

// The 12 configurations: 3 families x {items, +reviews, +ext, +ext+upd}.
std::vector<MethodSpec> full_method_grid();

enum class ListKind { Likes, Dislikes, Features };

std::string_view to_string(ListKind kind);

// Section markers shared by the renderers and the offline mock that reads prompts back.
namespace prompt_markers {
inline constexpr std::string_view kRecordAsin = "ASIN: ";
inline constexpr std::string_view kRecordProduct = "Product: ";
inline constexpr std::string_view kRecordRating = "Rating: ";
inline constexpr std::string_view kRecordReview = "Review: ";
inline constexpr std::string_view kListItem = "- ";
inline constexpr std::string_view kPositive = "Positive aspects: ";
inline constexpr std::string_view kNegative = "Negative aspects: ";
inline constexpr std::string_view kFeatures = "Key Features: ";
inline constexpr std::string_view kCandidateHeader = "Candidate list:";
inline constexpr std::string_view kHistoryReview = "   Review: ";
inline constexpr std::string_view kRecencyPrefix = "Note that my most recently purchased item is ";
inline constexpr std::string_view kIclPrefix = "then you should recommend ";
inline constexpr std::string_view kIclMiddle = " to me, and now that I've bought ";
inline constexpr std::string_view kEmptySection = "none";
}  // namespace prompt_markers

std::string system_prompt();

// Review extractor prompt over a chronological slice. Precondition: slice non-empty.
std::string render_extractor(std::span<const ReviewRecord> records);

// Profile updater prompt for one list; items are rendered one per line.
std::string render_updater(std::span<const std::string> items, ListKind kind);

// PURE recommender prompt: purchase history in the family's style, the three
// profile sections, then the numbered slate. Precondition: slate has 20 items;
// ICL needs at least two purchases.
std::string render_recommender(const Profile& profile, std::span<const ReviewRecord> purchased,
                               const CandidateSet& candidates, MethodFamily family = MethodFamily::Sequential);

// Baseline prompt (no extractor). With use_reviews, raw review text follows each item.
std::string render_baseline(const MethodSpec& spec, std::span<const ReviewRecord> history,
                            const CandidateSet& candidates);

// Serializes a profile section as ["a", "b"], or "none" when empty.
std::string render_section(std::span<const std::string> items);

}  // namespace pure
