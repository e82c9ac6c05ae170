#include "pure/ranking.hpp"

#include <optional>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "pure/errors.hpp"
#include "pure/text_util.hpp"

namespace pure {

namespace {

// Strict label parse: decimal digits only, no sign, no padding.
std::optional<std::size_t> parse_label(const std::string& label, std::size_t slate_size) {
  if (label.empty() || label.size() > 2 || label[0] == '0') return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
  if (ec != std::errc() || ptr != label.data() + label.size()) return std::nullopt;
  if (value < 1 || value > slate_size) return std::nullopt;
  return value - 1;
}

std::set<std::string> token_set(std::span<const std::string> texts) {
  std::set<std::string> out;
  for (const auto& t : texts) {
    for (auto& tok : alnum_tokens(t)) out.insert(std::move(tok));
  }
  return out;
}

}  // namespace

Ranking sanitize(std::span<const std::string> raw_labels, const CandidateSet& slate) {
  const std::size_t n = slate.items.size();
  Ranking r;
  std::vector<bool> seen(n, false);
  bool dropped_repeat = false;
  for (const auto& raw : raw_labels) {
    auto idx = parse_label(trim(raw), n);
    if (!idx) {
      ++r.hallucinated_count;
      continue;
    }
    if (seen[*idx]) {
      dropped_repeat = true;
      continue;
    }
    seen[*idx] = true;
    r.order.push_back(*idx);
  }
  bool appended = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      r.order.push_back(i);
      appended = true;
    }
  }
  r.repaired = appended || dropped_repeat || r.hallucinated_count > 0;
  auto pos = std::find(r.order.begin(), r.order.end(), slate.truth_index);
  r.truth_rank = static_cast<int>(pos - r.order.begin()) + 1;
  return r;
}

double ndcg_at_k(int truth_rank, int k) {
  if (truth_rank < 1 || truth_rank > static_cast<int>(kSlateSize)) {
    throw ContractViolation("truth_rank " + std::to_string(truth_rank) + " outside [1,20]");
  }
  if (std::find(kNdcgCutoffs.begin(), kNdcgCutoffs.end(), k) == kNdcgCutoffs.end()) {
    throw ContractViolation("unsupported cutoff k=" + std::to_string(k));
  }
  if (truth_rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(truth_rank) + 1.0);
}

std::vector<std::size_t> overlap_rank(std::span<const std::string> titles, std::span<const std::string> positives,
                                      std::span<const std::string> negatives) {
  const auto pos = token_set(positives);
  const auto neg = token_set(negatives);
  std::vector<long> score(titles.size(), 0);
  for (std::size_t i = 0; i < titles.size(); ++i) {
    std::set<std::string> toks;
    for (auto& t : alnum_tokens(titles[i])) toks.insert(std::move(t));
    for (const auto& t : toks) {
      if (pos.contains(t)) ++score[i];
      if (neg.contains(t)) --score[i];
    }
  }
  std::vector<std::size_t> order(titles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    if (titles[a] != titles[b]) return titles[a] < titles[b];
    return a < b;
  });
  return order;
}

std::vector<std::string> labels_for(std::span<const std::size_t> order) {
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(std::to_string(i + 1));
  return out;
}

}  // namespace pure
