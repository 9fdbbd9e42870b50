#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace propwatch::text {

/// True when `s` is well-formed UTF-8 (no overlongs, no surrogates, <= U+10FFFF).
bool valid_utf8(std::string_view s);

/// Decodes UTF-8 into scalar values. Throws Error(parse) on malformed input.
std::u32string decode(std::string_view s);

void append_utf8(std::string& out, char32_t cp);
std::string encode(std::u32string_view s);

/// Number of Unicode scalar values. Throws Error(parse) on malformed input.
std::size_t scalar_count(std::string_view s);

/// NFC, then strips leading/trailing Unicode whitespace. This is the key used for
/// "same text" comparisons everywhere in the toolkit.
std::string normalize(std::string_view s);

/// Full Unicode lowercase mapping (root locale).
std::string to_lower(std::string_view s);

/// Word tokens according to Unicode word boundaries; only segments containing a
/// letter or digit are kept.
std::vector<std::string> words(std::string_view s);

bool is_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_whitespace(char32_t cp);

}  // namespace propwatch::text
