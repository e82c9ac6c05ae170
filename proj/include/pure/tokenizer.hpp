#pragma once

#include <cstdint>
#include <string_view>

namespace pure {

inline constexpr std::string_view kWhitespaceTokenizer = "whitespace";

// Deterministic token count. "whitespace" counts maximal non-whitespace runs.
// Throws ConfigError for an unregistered tokenizer id.
std::int64_t count_tokens(std::string_view text, std::string_view tokenizer_id = kWhitespaceTokenizer);

bool is_registered_tokenizer(std::string_view tokenizer_id);

}  // namespace pure
