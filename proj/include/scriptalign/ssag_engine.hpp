#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/bot_turn.hpp"
#include "scriptalign/engine_config.hpp"
#include "scriptalign/label_map.hpp"
#include "scriptalign/llm_backend.hpp"
#include "scriptalign/script_model.hpp"

namespace scriptalign {

/// Script-strategy aligned generation. Each step first predicts the next
/// therapist strategy, then either delivers expert content (questions,
/// information, advice) or lets the backend write a free reflection.
///
/// Only the questions and information of the realized path are used: the
/// path is known up to the next branch point, and the user's reply after the
/// branching question selects the next segment.
struct SsagSessionState {
  std::string topic_id;
  std::vector<ChatMessage> history;
  /// Script nodes of the realized path known so far (ends at a branch point or Terminal).
  NodePath realized_path;
  std::vector<std::string> pending_questions;
  std::vector<std::string> info_pool;
  std::set<std::string> posed;
  /// Strategy delivered in the previous step.
  std::optional<StrategyKind> last_strategy;
  int non_question_streak = 0;
  bool completed = false;

  bool operator==(const SsagSessionState&) const = default;
};

void to_json(nlohmann::json& j, const SsagSessionState& state);
void from_json(const nlohmann::json& j, SsagSessionState& state);

struct StrategyPrediction {
  std::vector<StrategyLabel> labels;
  std::string raw_text;
  /// Set when the output could not be parsed and the fallback label was used.
  bool warning = false;

  /// Priority AskQuestion > GiveInformation > ReflectiveListening; Other codes count as reflections.
  StrategyKind primary() const;
};

/// Extra facts the prediction prompt carries besides the conversation.
struct PredictionContext {
  std::string title;
  std::optional<StrategyKind> last_strategy;
  std::size_t pending_questions = 0;
  std::size_t pending_info = 0;
  bool question_due = false;
};

CompletionRequest build_predict_prompt(const std::vector<ChatMessage>& history, const LabelMap& label_map,
                                       const PredictionContext& context, const EngineConfig& config);

/// One classification call at temperature 0 over the last `history_window`
/// turns. Requires at least one user turn.
StrategyPrediction predict_strategy(const std::vector<ChatMessage>& history, Backend& backend,
                                    const LabelMap& label_map, const PredictionContext& context,
                                    const EngineConfig& config);

struct ExpertContent {
  std::string node_id;
  std::string text;

  bool operator==(const ExpertContent&) const = default;
};

/// AskQuestion: head of pending_questions. GiveInformation: the info item most
/// similar to the last user message (earliest wins ties). Throws WrongStrategy
/// for any other strategy. Does not modify the state.
std::optional<ExpertContent> retrieve_expert_content(const DialogueScript& script, const SsagSessionState& state,
                                                     StrategyKind strategy);

/// Opening turn: delivers the first expert question of the root segment.
std::pair<SsagSessionState, BotTurn> ssag_start(const DialogueScript& script, Backend& backend,
                                                const EngineConfig& config);

std::pair<SsagSessionState, BotTurn> ssag_step(const DialogueScript& script, const SsagSessionState& state,
                                               const UserInput& input, Backend& backend, const LabelMap& label_map,
                                               const EngineConfig& config);

/// Options the user is choosing between (set once the branching question is posed).
std::vector<std::string> ssag_pending_branch(const DialogueScript& script, const SsagSessionState& state);

/// Used when the opening segment has no expert content to deliver.
inline constexpr std::string_view kSsagGreeting = "Hello, thank you for making time to talk with me today.";
/// Closing text for a Terminal without text.
inline constexpr std::string_view kSsagFarewell = "Thank you for talking with me today.";

}  // namespace scriptalign
