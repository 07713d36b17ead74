#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/bot_turn.hpp"
#include "scriptalign/script_model.hpp"

namespace scriptalign {

/// Sent when free text arrives where buttons are expected.
inline constexpr std::string_view kRepromptText = "Please choose one of the options below.";

/// Bot nodes delivered together in one turn, starting at some node.
/// A chain runs through single-child Bot nodes and stops after a question
/// (the user answers in free text), at a branch point (the user picks an
/// option), or at a Terminal.
struct BotChain {
  std::vector<std::string> node_ids;
  bool ends_at_terminal = false;
  bool ends_at_branch = false;
};

BotChain bot_chain(const DialogueScript& script, std::string_view start_id);

/// UserOption children of a branch point as buttons, in child order.
std::vector<TurnOption> options_of(const DialogueScript& script, const ScriptNode& node);

struct RuleSessionState {
  std::string topic_id;
  std::string current_node_id;
  NodePath path_so_far;
  bool completed = false;

  bool operator==(const RuleSessionState&) const = default;
};

void to_json(nlohmann::json& j, const RuleSessionState& state);
void from_json(const nlohmann::json& j, RuleSessionState& state);

/// Throws UnknownTopic.
std::pair<RuleSessionState, BotTurn> start_topic(const ScriptLibrary& library, std::string_view topic_id);
std::pair<RuleSessionState, BotTurn> start_topic(const DialogueScript& script);

/// Throws SessionComplete or InvalidOption. The input state is never modified.
std::pair<RuleSessionState, BotTurn> rule_step(const DialogueScript& script, const RuleSessionState& state,
                                               const UserInput& input);

/// Buttons currently offered to the user (empty when free text is expected).
std::vector<TurnOption> pending_options(const DialogueScript& script, const RuleSessionState& state);

/// Path a compliant rule-based walk takes when `choices` are clicked at the
/// branch points in order. Stops early at a branch point when choices run
/// out; surplus choices are ignored. Throws InvalidOption naming the position.
NodePath oracle_path(const DialogueScript& script, std::span<const std::string> choices);

}  // namespace scriptalign
