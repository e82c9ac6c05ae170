#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pure/llm_gateway.hpp"
#include "pure/profile.hpp"

namespace pure {

// Deterministic stand-in for the LLM. Reads the rendered prompt back and applies
// fixed rules per schema:
//   extract      rating >= 4 puts the title in likes, rating <= 2 in dislikes;
//                features are mock_features(review text).
//   update_list  case-insensitive de-duplication keeping first occurrences.
//   rank20       overlap_rank of candidate titles against the profile sections
//                (baselines: against purchased titles and inlined review text).
// Referentially transparent: identical requests give byte-identical raw_text.
ChatOutcome mock_complete(const ChatRequest& request);

// Lowercased alphabetic tokens of length >= 5, de-duplicated, ordered by
// frequency (desc) then lexicographically, at most 8.
std::vector<std::string> mock_features(std::string_view review_text);

// Case-insensitive, trim-insensitive de-duplication preserving the first occurrence.
std::vector<std::string> case_insensitive_dedup(const std::vector<std::string>& items);

class MockBackend : public Backend {
 public:
  BackendReply send(const ChatRequest& request) override;
  std::string backend_id() const override { return "mock"; }
  std::string model_id() const override { return "mock-rules-v1"; }
};

}  // namespace pure
