#include "scriptalign/rule_engine.hpp"

#include <algorithm>

namespace scriptalign {

BotChain bot_chain(const DialogueScript& script, std::string_view start_id) {
  BotChain chain;
  const ScriptNode* current = &script.node(start_id);
  // A valid tree bounds the walk; the guard keeps malformed input finite.
  for (std::size_t guard = 0; guard <= script.nodes().size(); ++guard) {
    chain.node_ids.push_back(current->id);
    if (current->kind == NodeKind::Terminal) {
      chain.ends_at_terminal = true;
      return chain;
    }
    if (script.is_branch_point(*current)) {
      chain.ends_at_branch = true;
      return chain;
    }
    if (current->kind == NodeKind::TherapeuticQuestion || current->children.size() != 1) return chain;
    current = &script.node(current->children.front());
  }
  throw StructureError("topic " + script.topic_id() + ": bot chain does not terminate");
}

std::vector<TurnOption> options_of(const DialogueScript& script, const ScriptNode& node) {
  std::vector<TurnOption> options;
  if (!script.is_branch_point(node)) return options;
  for (const auto& child : node.children) options.push_back({child, script.node(child).text});
  return options;
}

namespace {

void emit_chain(const DialogueScript& script, const BotChain& chain, RuleSessionState& state, BotTurn& turn) {
  for (const auto& id : chain.node_ids) {
    const auto& node = script.node(id);
    state.path_so_far.push_back(id);
    if (!node.text.empty()) {
      turn.texts.push_back(node.text);
      turn.matched_nodes.emplace_back(id);
    }
  }
  state.current_node_id = chain.node_ids.back();
  state.completed = chain.ends_at_terminal;
  turn.done = chain.ends_at_terminal;
  if (chain.ends_at_branch) turn.options = options_of(script, script.node(state.current_node_id));
}

}  // namespace

void to_json(nlohmann::json& j, const RuleSessionState& state) {
  j = {{"topic_id", state.topic_id},
       {"current_node_id", state.current_node_id},
       {"path_so_far", state.path_so_far},
       {"completed", state.completed}};
}

void from_json(const nlohmann::json& j, RuleSessionState& state) {
  j.at("topic_id").get_to(state.topic_id);
  j.at("current_node_id").get_to(state.current_node_id);
  j.at("path_so_far").get_to(state.path_so_far);
  j.at("completed").get_to(state.completed);
}

std::pair<RuleSessionState, BotTurn> start_topic(const ScriptLibrary& library, std::string_view topic_id) {
  return start_topic(library.topic(topic_id));
}

std::pair<RuleSessionState, BotTurn> start_topic(const DialogueScript& script) {
  RuleSessionState state;
  state.topic_id = script.topic_id();
  BotTurn turn;
  emit_chain(script, bot_chain(script, script.root_id()), state, turn);
  return {std::move(state), std::move(turn)};
}

std::vector<TurnOption> pending_options(const DialogueScript& script, const RuleSessionState& state) {
  if (state.completed) return {};
  return options_of(script, script.node(state.current_node_id));
}

std::pair<RuleSessionState, BotTurn> rule_step(const DialogueScript& script, const RuleSessionState& state,
                                               const UserInput& input) {
  if (state.completed) throw SessionComplete("topic " + state.topic_id + " is already complete");

  const auto& current = script.node(state.current_node_id);
  RuleSessionState next = state;
  BotTurn turn;

  if (script.is_branch_point(current)) {
    if (!input.option_id) {
      turn.texts.emplace_back(kRepromptText);
      turn.matched_nodes.emplace_back(std::nullopt);
      turn.options = options_of(script, current);
      return {std::move(next), std::move(turn)};
    }
    const auto& children = current.children;
    if (std::find(children.begin(), children.end(), *input.option_id) == children.end())
      throw InvalidOption("option \"" + *input.option_id + "\" is not offered at " + current.id);
    const auto& option = script.node(*input.option_id);
    next.path_so_far.push_back(option.id);
    emit_chain(script, bot_chain(script, option.children.front()), next, turn);
    return {std::move(next), std::move(turn)};
  }

  if (input.option_id)
    throw InvalidOption("option \"" + *input.option_id + "\" given but no options are offered at " + current.id);
  emit_chain(script, bot_chain(script, current.children.front()), next, turn);
  return {std::move(next), std::move(turn)};
}

NodePath oracle_path(const DialogueScript& script, std::span<const std::string> choices) {
  NodePath path;
  std::size_t next_choice = 0;
  std::string start = script.root_id();
  while (true) {
    auto chain = bot_chain(script, start);
    path.insert(path.end(), chain.node_ids.begin(), chain.node_ids.end());
    if (chain.ends_at_terminal) return path;
    const auto& last = script.node(chain.node_ids.back());
    if (!chain.ends_at_branch) {
      start = last.children.front();
      continue;
    }
    if (next_choice >= choices.size()) return path;
    const auto& choice = choices[next_choice];
    if (std::find(last.children.begin(), last.children.end(), choice) == last.children.end()) {
      throw InvalidOption("invalid option \"" + choice + "\" at position " + std::to_string(next_choice) +
                          " (branch " + last.id + ")");
    }
    ++next_choice;
    path.push_back(choice);
    start = script.node(choice).children.front();
  }
}

}  // namespace scriptalign
