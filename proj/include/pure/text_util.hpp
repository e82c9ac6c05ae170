#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pure {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Trims and folds every internal whitespace run to a single space.
std::string collapse_whitespace(std::string_view s);

// Key used for case-insensitive de-duplication: lower(trim(s)).
std::string fold_key(std::string_view s);

// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view s);

// Lowercased maximal runs of ASCII letters and digits.
std::vector<std::string> alnum_tokens(std::string_view s);

// Lowercased maximal runs of ASCII letters.
std::vector<std::string> alpha_tokens(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

// Stable 64-bit FNV-1a; used where hashes must survive across processes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace pure
