#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace khid::text {

inline constexpr std::string_view kUrlToken = "URL";
inline constexpr std::string_view kCiteToken = "CITE";
inline constexpr std::string_view kQuoteToken = "QUOTE";
inline constexpr std::string_view kCodeToken = "CODE";

// Normalizes raw post text:
//   [code]..[/code] and ```..``` blocks        -> CODE
//   [quote=author ...]..[/quote] (cited post)  -> CITE
//   [quote]..[/quote]                          -> QUOTE
//   (http|https|ftp)://... and www....         -> URL
// then drops every character outside [A-Za-z0-9 .,!?'-], collapses
// whitespace runs and trims. Total and idempotent.
std::string preprocess_text(std::string_view raw);

bool contains_url(std::string_view s);

// Word list used for term counting: lowercased, split on spaces, trailing
// punctuation stripped, empty words dropped.
std::vector<std::string> count_tokens(std::string_view preprocessed);

std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep = " ");
std::string to_lower(std::string_view s);

}  // namespace khid::text
