#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace scriptalign {

inline constexpr double kDefaultMatchThreshold = 0.6;
inline constexpr double kDefaultBranchThreshold = 0.4;

/// Lowercases ASCII letters, deletes ASCII punctuation and splits on
/// whitespace. Non-ASCII bytes pass through unchanged.
std::set<std::string> normalized_tokens(std::string_view text);

/// Same normalization as normalized_tokens() but keeps order and repeats.
std::vector<std::string> token_sequence(std::string_view text);

/// Token-set Jaccard similarity of the normalized texts; 1.0 when both are
/// empty after normalization.
double fuzzy_similarity(std::string_view a, std::string_view b);

}  // namespace scriptalign
