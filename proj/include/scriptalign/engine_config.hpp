#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "scriptalign/prompt_assets.hpp"
#include "scriptalign/text_similarity.hpp"

namespace scriptalign {

/// Sent as the only message of the request that opens an LLM-driven session.
inline constexpr std::string_view kSessionStartMessage = "[SESSION_START]";

struct EngineConfig {
  /// Minimum token-set Jaccard for a bot utterance to count as a script node.
  double match_threshold = kDefaultMatchThreshold;
  /// Minimum similarity for free text to select a branch; below it the first option is taken.
  double branch_threshold = kDefaultBranchThreshold;
  /// Approximate tokens (4 characters each) allowed for the serialized script.
  int token_budget = 8000;
  /// Turns of history given to the strategy predictor.
  std::size_t history_window = 8;
  /// Consecutive non-question strategies before the predictor is nudged.
  int nudge_after = 3;
  std::shared_ptr<const PromptTemplates> prompts;

  /// Config with templates read from default_assets_dir().
  static EngineConfig with_default_assets();
};

/// ceil(characters / 4).
int estimate_tokens(std::string_view text);

}  // namespace scriptalign
