#include "pure/tokenizer.hpp"

#include <string>

#include "pure/errors.hpp"

namespace pure {

bool is_registered_tokenizer(std::string_view tokenizer_id) { return tokenizer_id == kWhitespaceTokenizer; }

std::int64_t count_tokens(std::string_view text, std::string_view tokenizer_id) {
  if (!is_registered_tokenizer(tokenizer_id)) {
    throw ConfigError("unknown tokenizer '" + std::string(tokenizer_id) + "'");
  }
  std::int64_t n = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

}  // namespace pure
