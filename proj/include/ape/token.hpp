#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace ape {

// A token is a non-empty string without whitespace; a sentence is a token
// vector. split/join round-trip exactly for valid tokens.
using Token = std::string;
using Sentence = std::vector<Token>;

inline bool is_space_char(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline bool valid_token(std::string_view t) {
  if (t.empty()) return false;
  for (char c : t)
    if (is_space_char(c)) return false;
  return true;
}

inline Sentence split_tokens(std::string_view line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space_char(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !is_space_char(line[i])) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string join_tokens(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

}  // namespace ape
