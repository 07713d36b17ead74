#include "scriptalign/text_similarity.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>
#include <utility>

namespace scriptalign {

std::vector<std::string> token_sequence(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c < 0x80 && std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::exchange(current, {}));
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::set<std::string> normalized_tokens(std::string_view text) {
  auto sequence = token_sequence(text);
  return {std::make_move_iterator(sequence.begin()), std::make_move_iterator(sequence.end())};
}

double fuzzy_similarity(std::string_view a, std::string_view b) {
  const auto left = normalized_tokens(a);
  const auto right = normalized_tokens(b);
  if (left.empty() && right.empty()) return 1.0;
  std::size_t common = 0;
  auto l = left.begin();
  auto r = right.begin();
  while (l != left.end() && r != right.end()) {
    if (*l < *r) {
      ++l;
    } else if (*r < *l) {
      ++r;
    } else {
      ++common;
      ++l;
      ++r;
    }
  }
  const auto united = left.size() + right.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

}  // namespace scriptalign
