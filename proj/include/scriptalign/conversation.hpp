#pragma once

#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/bot_turn.hpp"
#include "scriptalign/engine_config.hpp"
#include "scriptalign/label_map.hpp"
#include "scriptalign/llm_backend.hpp"
#include "scriptalign/pure_engine.hpp"
#include "scriptalign/rule_engine.hpp"
#include "scriptalign/sag_engine.hpp"
#include "scriptalign/ssag_engine.hpp"
#include "scriptalign/transcript.hpp"

namespace scriptalign {

/// Engine state of any condition, held by index in Condition order.
using EngineState = std::variant<RuleSessionState, PureSessionState, SagSessionState, SsagSessionState>;

Condition condition_of(const EngineState& state);
bool is_completed(const EngineState& state);

nlohmann::json engine_state_to_json(const EngineState& state);
EngineState engine_state_from_json(Condition condition, const nlohmann::json& j);

/// Everything a step needs besides the state. The backend is unused by the
/// rule-based condition and may be null there.
struct EngineDeps {
  const DialogueScript& script;
  Backend* backend = nullptr;
  const LabelMap* label_map = nullptr;
  const EngineConfig& config;
};

std::pair<EngineState, BotTurn> engine_start(Condition condition, const EngineDeps& deps);
/// For the LLM conditions the returned turn carries the pending branch
/// options as buttons, so a click works the same way in every condition.
std::pair<EngineState, BotTurn> engine_step(const EngineState& state, const UserInput& input,
                                            const EngineDeps& deps);

/// Options the user is currently choosing between, if any.
std::vector<TurnOption> suggested_options(const DialogueScript& script, const EngineState& state);

/// Text shown for the user's message: the typed text, or the option label.
std::string display_text(const DialogueScript& script, const UserInput& input);

}  // namespace scriptalign
