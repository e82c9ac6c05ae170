#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "pure/dataset.hpp"
#include "pure/llm_gateway.hpp"
#include "pure/profile.hpp"

namespace pure {

// Cost and failure accounting for profile maintenance calls.
struct ProfileStats {
  std::int64_t extractor_tokens = 0;
  std::int64_t updater_tokens = 0;
  int extractor_calls = 0;
  int updater_calls = 0;
  int fallbacks = 0;          // updater lists replaced by local de-duplication
  int update_violations = 0;  // updater returned a longer list than it was given

  ProfileStats& operator+=(const ProfileStats& o);
};

// Runs the review extractor on one review. ParseExhausted propagates, tagged with the record.
Extracted extract(const ReviewRecord& record, Gateway& gateway, ProfileStats* stats = nullptr);

// Extractor over every review to date in one prompt (ablation mode).
Extracted extract_batch(std::span<const ReviewRecord> records, Gateway& gateway, ProfileStats* stats = nullptr);

// Order-preserving concatenation prev ++ ext per list; no de-duplication.
RawProfile merge(const Profile& prev, const Extracted& ext);

// Profile updater, one call per non-empty list. Output is clamped to the input
// length; ParseExhausted on a list falls back to case-insensitive de-duplication.
// The returned profile has version 0; callers stamp it.
Profile update(const RawProfile& raw, Gateway& gateway, ProfileStats* stats = nullptr);

// Updater-off passthrough: exact-duplicate collapse only.
Profile collapse_exact(const RawProfile& raw);

// merge then update (or collapse_exact), stamping version prev.version + 1.
Profile advance(const Profile& prev, const Extracted& ext, Gateway& gateway, bool use_updater,
                ProfileStats* stats = nullptr);

// One full timestep: extract(record) then advance.
Profile step(const Profile& prev, const ReviewRecord& record, Gateway& gateway, bool use_updater,
             ProfileStats* stats = nullptr);

// Entries present (case-insensitively) in both likes and dislikes.
int count_conflicts(const Profile& profile);

// The three profile sections exactly as the recommender prompt shows them.
std::string render_profile(const Profile& profile);

}  // namespace pure
