#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/bot_turn.hpp"
#include "scriptalign/engine_config.hpp"
#include "scriptalign/llm_backend.hpp"
#include "scriptalign/script_model.hpp"

namespace scriptalign {

/// Unaligned condition: the backend only gets a therapist persona and the
/// topic title, never script content. Ends when the closing marker appears.
struct PureSessionState {
  std::string topic_id;
  std::vector<ChatMessage> history;
  bool completed = false;

  bool operator==(const PureSessionState&) const = default;
};

void to_json(nlohmann::json& j, const PureSessionState& state);
void from_json(const nlohmann::json& j, PureSessionState& state);

CompletionRequest build_pure_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                    const EngineConfig& config);

std::pair<PureSessionState, BotTurn> pure_start(const DialogueScript& script, Backend& backend,
                                                const EngineConfig& config);
std::pair<PureSessionState, BotTurn> pure_step(const DialogueScript& script, const PureSessionState& state,
                                               const UserInput& input, Backend& backend, const EngineConfig& config);

}  // namespace scriptalign
