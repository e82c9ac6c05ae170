#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pure/dataset.hpp"

namespace pure {

inline constexpr std::array<int, 4> kNdcgCutoffs = {1, 5, 10, 20};

struct Ranking {
  std::vector<std::size_t> order;  // permutation of slate indices 0..19
  int truth_rank = 0;              // 1-based
  int hallucinated_count = 0;
  bool repaired = false;

  bool operator==(const Ranking&) const = default;
};

// Maps labels "1".."20" to slate indices. Unknown labels are dropped and counted,
// repeats keep their first occurrence, missing candidates are appended in slate order.
// Total: any input yields a permutation.
Ranking sanitize(std::span<const std::string> raw_labels, const CandidateSet& slate);

// Single relevant item: 1/log2(truth_rank + 1) when truth_rank <= k, else 0.
// Throws ContractViolation unless truth_rank in [1,20] and k in {1,5,10,20}.
double ndcg_at_k(int truth_rank, int k);

// Offline ranking rule: score = |tok(title) & tok(positives)| - |tok(title) & tok(negatives)|
// over lowercased alphanumeric token sets; descending score, ties by title, then slate index.
std::vector<std::size_t> overlap_rank(std::span<const std::string> titles, std::span<const std::string> positives,
                                      std::span<const std::string> negatives);

// Slate order as a label list "1".."n" following `order`.
std::vector<std::string> labels_for(std::span<const std::size_t> order);

}  // namespace pure
