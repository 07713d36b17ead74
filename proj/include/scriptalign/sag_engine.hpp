#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/bot_turn.hpp"
#include "scriptalign/engine_config.hpp"
#include "scriptalign/llm_backend.hpp"
#include "scriptalign/script_model.hpp"

namespace scriptalign {

/// Script-aligned generation through prompting: the whole script goes into
/// the system prompt and the engine follows the conversation by matching
/// each generated utterance against nearby script nodes.
struct SagSessionState {
  std::string topic_id;
  std::vector<ChatMessage> history;
  /// Candidate positions, nearest first. Holds UserOption ids while waiting
  /// for the user to pick a branch.
  std::vector<std::string> frontier;
  std::set<std::string> matched_questions;
  /// Script nodes matched so far (bot nodes by text, options by user choice).
  NodePath matched_sequence;
  bool completed = false;

  bool operator==(const SagSessionState&) const = default;
};

void to_json(nlohmann::json& j, const SagSessionState& state);
void from_json(const nlohmann::json& j, SagSessionState& state);
void to_json(nlohmann::json& j, const ChatMessage& message);
void from_json(const nlohmann::json& j, ChatMessage& message);

/// Nodes the conversation may be at after `node_id` was matched: its
/// UserOption children at a branch point, otherwise the bot nodes reachable
/// through at most two unmatched bot nodes (nearest first).
std::vector<std::string> frontier_after(const DialogueScript& script, std::string_view node_id);
/// Frontier before anything was said: the root plus its lookahead.
std::vector<std::string> initial_frontier(const DialogueScript& script);

struct TrackResult {
  std::optional<std::string> matched_node_id;
  std::vector<std::string> new_frontier;
  double best_similarity = 0.0;
};

TrackResult track_position(const DialogueScript& script, std::string_view bot_text,
                           const std::vector<std::string>& frontier, double threshold);

/// Best matching UserOption among `options` for free text, or the first one
/// when nothing reaches `threshold`.
std::string resolve_branch(const DialogueScript& script, const std::vector<std::string>& options,
                           std::string_view user_text, double threshold);

/// Throws PromptTooLarge when even a depth-1 listing exceeds the budget.
CompletionRequest build_sag_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                   const std::vector<std::string>& frontier, const EngineConfig& config);

/// Opens a session with one backend call.
std::pair<SagSessionState, BotTurn> sag_start(const DialogueScript& script, Backend& backend,
                                              const EngineConfig& config);

/// One user message, one backend call. On any error the input state is untouched.
std::pair<SagSessionState, BotTurn> sag_step(const DialogueScript& script, const SagSessionState& state,
                                             const UserInput& input, Backend& backend, const EngineConfig& config);

/// Splits generated text into bubbles (blank-line separated) and removes the
/// closing marker. Returns whether the marker was present.
bool split_generated(std::string_view text, std::vector<std::string>& bubbles);

struct FinetunePair {
  std::string topic_id;
  std::string node_id;
  std::vector<ChatMessage> context;
  std::string target;
};

/// Stand-in for the client's free-text reply between two bot utterances.
inline constexpr std::string_view kClientReplyPlaceholder = "[client reply]";

/// One pair per bot utterance along each root path, topics in id order.
std::vector<FinetunePair> export_finetune_pairs(const ScriptLibrary& library);
nlohmann::json finetune_pair_to_json(const FinetunePair& pair);

}  // namespace scriptalign
