#include "pure/profile_engine.hpp"

#include <unordered_set>

#include "pure/errors.hpp"
#include "pure/mock_backend.hpp"
#include "pure/prompt_kit.hpp"
#include "pure/text_util.hpp"

namespace pure {

namespace pm = prompt_markers;

ProfileStats& ProfileStats::operator+=(const ProfileStats& o) {
  extractor_tokens += o.extractor_tokens;
  updater_tokens += o.updater_tokens;
  extractor_calls += o.extractor_calls;
  updater_calls += o.updater_calls;
  fallbacks += o.fallbacks;
  update_violations += o.update_violations;
  return *this;
}

namespace {

std::vector<std::string> clean_list(const nlohmann::json& arr) {
  std::vector<std::string> out;
  for (const auto& v : arr) {
    auto s = collapse_whitespace(v.get<std::string>());
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

Extracted run_extractor(std::span<const ReviewRecord> records, Gateway& gateway, ProfileStats* stats) {
  ChatRequest req{system_prompt(), render_extractor(records), SchemaId::Extract};
  ChatOutcome out;
  try {
    out = gateway.complete_json(req);
  } catch (const ParseExhausted& e) {
    const auto& r = records.back();
    throw ParseExhausted("extractor failed for user " + r.user_id + " item " + r.item_id + ": " + e.what(),
                         e.last_raw(), e.attempts());
  }
  if (stats != nullptr) {
    stats->extractor_tokens += out.prompt_tokens;
    ++stats->extractor_calls;
  }
  return Extracted{clean_list(out.parsed_value.at("likes")), clean_list(out.parsed_value.at("dislikes")),
                   clean_list(out.parsed_value.at("key_features"))};
}

std::vector<std::string> exact_collapse(const std::vector<std::string>& items) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& item : items) {
    if (seen.insert(item).second) out.push_back(item);
  }
  return out;
}

std::vector<std::string> update_list(const std::vector<std::string>& raw, ListKind kind, Gateway& gateway,
                                     ProfileStats* stats) {
  if (raw.empty()) return {};
  ChatRequest req{system_prompt(), render_updater(raw, kind), SchemaId::UpdateList};
  try {
    auto out = gateway.complete_json(req);
    if (stats != nullptr) {
      stats->updater_tokens += out.prompt_tokens;
      ++stats->updater_calls;
    }
    auto items = case_insensitive_dedup(clean_list(out.parsed_value.at("items")));
    if (items.size() > raw.size()) {
      if (stats != nullptr) ++stats->update_violations;
      items.resize(raw.size());
    }
    return items;
  } catch (const ParseExhausted&) {
    if (stats != nullptr) {
      ++stats->fallbacks;
      ++stats->updater_calls;
    }
    return case_insensitive_dedup(raw);
  }
}

}  // namespace

Extracted extract(const ReviewRecord& record, Gateway& gateway, ProfileStats* stats) {
  return run_extractor(std::span<const ReviewRecord>(&record, 1), gateway, stats);
}

Extracted extract_batch(std::span<const ReviewRecord> records, Gateway& gateway, ProfileStats* stats) {
  return run_extractor(records, gateway, stats);
}

RawProfile merge(const Profile& prev, const Extracted& ext) {
  RawProfile raw{prev.likes, prev.dislikes, prev.features};
  raw.likes.insert(raw.likes.end(), ext.likes.begin(), ext.likes.end());
  raw.dislikes.insert(raw.dislikes.end(), ext.dislikes.begin(), ext.dislikes.end());
  raw.features.insert(raw.features.end(), ext.features.begin(), ext.features.end());
  return raw;
}

Profile update(const RawProfile& raw, Gateway& gateway, ProfileStats* stats) {
  Profile p;
  p.likes = update_list(raw.likes, ListKind::Likes, gateway, stats);
  p.dislikes = update_list(raw.dislikes, ListKind::Dislikes, gateway, stats);
  p.features = update_list(raw.features, ListKind::Features, gateway, stats);
  return p;
}

Profile collapse_exact(const RawProfile& raw) {
  Profile p;
  p.likes = exact_collapse(raw.likes);
  p.dislikes = exact_collapse(raw.dislikes);
  p.features = exact_collapse(raw.features);
  return p;
}

Profile advance(const Profile& prev, const Extracted& ext, Gateway& gateway, bool use_updater, ProfileStats* stats) {
  auto raw = merge(prev, ext);
  Profile next = use_updater ? update(raw, gateway, stats) : collapse_exact(raw);
  next.version = prev.version + 1;
  return next;
}

Profile step(const Profile& prev, const ReviewRecord& record, Gateway& gateway, bool use_updater,
             ProfileStats* stats) {
  return advance(prev, extract(record, gateway, stats), gateway, use_updater, stats);
}

int count_conflicts(const Profile& profile) {
  std::unordered_set<std::string> liked;
  for (const auto& l : profile.likes) liked.insert(fold_key(l));
  std::unordered_set<std::string> counted;
  int n = 0;
  for (const auto& d : profile.dislikes) {
    auto k = fold_key(d);
    if (liked.contains(k) && counted.insert(k).second) ++n;
  }
  return n;
}

std::string render_profile(const Profile& profile) {
  return std::string(pm::kPositive) + render_section(profile.likes) + "\n" + std::string(pm::kNegative) +
         render_section(profile.dislikes) + "\n" + std::string(pm::kFeatures) + render_section(profile.features) +
         "\n";
}

}  // namespace pure
