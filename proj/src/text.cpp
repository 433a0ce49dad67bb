#include "khid/text.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace khid::text {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(s[pos + k])) != prefix[k]) return false;
  }
  return true;
}

// Length of the scheme/host prefix of a URL starting at `pos`, or 0. Matches
// (https?|ftp):// and www. case-insensitively.
std::size_t url_prefix_at(std::string_view s, std::size_t pos) {
  for (std::string_view p : {"http://", "https://", "ftp://", "www."}) {
    if (starts_with_ci(s, pos, p)) return p.size();
  }
  return 0;
}

// Leftmost match of the URL pattern followed by its non-space tail, as
// [begin, end). Returns begin == npos when there is none.
std::pair<std::size_t, std::size_t> find_url(std::string_view s, std::size_t from) {
  for (std::size_t i = from; i < s.size(); ++i) {
    std::size_t n = url_prefix_at(s, i);
    // \S+ after the prefix needs at least one character.
    if (n == 0 || i + n >= s.size() || is_space(static_cast<unsigned char>(s[i + n]))) continue;
    std::size_t j = i + n;
    while (j < s.size() && !is_space(static_cast<unsigned char>(s[j]))) ++j;
    return {i, j};
  }
  return {std::string_view::npos, std::string_view::npos};
}

// Replaces s[begin, end) by " token " in both the text and its lowercase
// shadow, which is only used for case-insensitive searching.
void splice(std::string& s, std::string& lower, std::size_t begin, std::size_t end,
            std::string_view token) {
  std::string repl = " ";
  repl += token;
  repl += ' ';
  s.replace(begin, end - begin, repl);
  lower.replace(begin, end - begin, repl);
}

void replace_code_tags(std::string& s, std::string& lower) {
  std::size_t from = 0;
  while (true) {
    auto open = lower.find("[code]", from);
    if (open == std::string::npos) return;
    auto close = lower.find("[/code]", open + 6);
    if (close == std::string::npos) return;
    splice(s, lower, open, close + 7, kCodeToken);
    from = open;
  }
}

void replace_fenced(std::string& s, std::string& lower) {
  std::size_t from = 0;
  while (true) {
    auto open = s.find("```", from);
    if (open == std::string::npos) return;
    auto close = s.find("```", open + 3);
    if (close == std::string::npos) return;
    splice(s, lower, open, close + 3, kCodeToken);
    from = open;
  }
}

// Innermost pair first, so nested quotes collapse to one label naming the
// outermost block.
void replace_quotes(std::string& s, std::string& lower) {
  while (true) {
    auto close = lower.find("[/quote]");
    if (close == std::string::npos) return;
    std::size_t open = std::string::npos;
    bool cited = false;
    for (std::size_t pos = lower.rfind("[quote", close); pos != std::string::npos;
         pos = pos == 0 ? std::string::npos : lower.rfind("[quote", pos - 1)) {
      std::size_t after = pos + 6;
      if (after >= lower.size()) continue;
      char c = lower[after];
      if (c == ']') {
        open = pos;
        cited = false;
        break;
      }
      if (c == '=' || c == ' ') {
        auto rb = lower.find(']', after);
        if (rb != std::string::npos && rb < close) {
          open = pos;
          cited = true;
          break;
        }
      }
    }
    if (open == std::string::npos) {
      // Orphan closing tag; neutralize it so the loop terminates.
      splice(s, lower, close, close + 8, "");
      continue;
    }
    splice(s, lower, open, close + 8, cited ? kCiteToken : kQuoteToken);
  }
}

std::string replace_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t from = 0;
  while (true) {
    auto [b, e] = find_url(s, from);
    if (b == std::string_view::npos) break;
    out.append(s.substr(from, b - from));
    out += ' ';
    out += kUrlToken;
    out += ' ';
    from = e;
  }
  out.append(s.substr(from));
  return out;
}

bool is_kept(unsigned char c) {
  if (c >= 0x80) return false;
  if (std::isalnum(c)) return true;
  switch (c) {
    case '.': case ',': case '!': case '?': case '\'': case '-':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string preprocess_text(std::string_view raw) {
  std::string s(raw);
  std::string lower = to_lower(s);
  replace_code_tags(s, lower);
  replace_fenced(s, lower);
  replace_quotes(s, lower);
  s = replace_urls(s);

  std::string kept;
  kept.reserve(s.size());
  for (unsigned char c : s) {
    if (is_space(c)) {
      kept.push_back(' ');
    } else if (is_kept(c)) {
      kept.push_back(static_cast<char>(c));
    }
  }
  // Dropping brackets can expose a fresh "www." run.
  kept = replace_urls(kept);

  std::string out;
  out.reserve(kept.size());
  bool pending_space = false;
  for (char c : kept) {
    if (c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

bool contains_url(std::string_view s) { return find_url(s, 0).first != std::string_view::npos; }

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> count_tokens(std::string_view preprocessed) {
  std::vector<std::string> out;
  for (auto& w : split_whitespace(preprocessed)) {
    while (!w.empty()) {
      char c = w.back();
      if (c == '.' || c == ',' || c == '!' || c == '?' || c == '\'' || c == '-') {
        w.pop_back();
      } else {
        break;
      }
    }
    if (!w.empty()) out.push_back(to_lower(w));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace khid::text
