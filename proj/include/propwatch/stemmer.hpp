#pragma once

#include <string>
#include <string_view>

namespace propwatch::stem {

/// Snowball English ("Porter2") stemmer. Input must be lowercase.
std::string english(std::string_view word);

/// Snowball Russian stemmer. Input must be lowercase Cyrillic.
std::string russian(std::string_view word);

/// Dispatches on script: tokens containing Cyrillic go to the Russian stemmer,
/// pure Latin tokens to the English one, anything else is returned unchanged.
std::string auto_stem(std::string_view lowercase_word);

}  // namespace propwatch::stem
