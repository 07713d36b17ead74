#include "scriptalign/conversation.hpp"

#include <algorithm>

#include "scriptalign/errors.hpp"

namespace scriptalign {

namespace {

std::vector<TurnOption> as_options(const DialogueScript& script, const std::vector<std::string>& ids) {
  std::vector<TurnOption> out;
  for (const auto& id : ids) out.push_back({id, script.node(id).text});
  return out;
}

Backend& need_backend(const EngineDeps& deps) {
  if (!deps.backend) throw UnknownBackend("this condition needs a text-generation backend");
  return *deps.backend;
}

const LabelMap& need_label_map(const EngineDeps& deps) {
  if (!deps.label_map) throw BadRequest("the strategy-aligned condition needs a label map");
  return *deps.label_map;
}

template <class State>
std::pair<EngineState, BotTurn> widen(std::pair<State, BotTurn>&& result) {
  return {EngineState(std::move(result.first)), std::move(result.second)};
}

}  // namespace

Condition condition_of(const EngineState& state) { return kAllConditions[state.index()]; }

bool is_completed(const EngineState& state) {
  return std::visit([](const auto& s) { return s.completed; }, state);
}

nlohmann::json engine_state_to_json(const EngineState& state) {
  return std::visit([](const auto& s) { return nlohmann::json(s); }, state);
}

EngineState engine_state_from_json(Condition condition, const nlohmann::json& j) {
  switch (condition) {
    case Condition::RuleBased: return j.get<RuleSessionState>();
    case Condition::PureLlm: return j.get<PureSessionState>();
    case Condition::SagPrompt: return j.get<SagSessionState>();
    case Condition::Ssag: return j.get<SsagSessionState>();
  }
  throw SchemaError("unknown condition");
}

std::pair<EngineState, BotTurn> engine_start(Condition condition, const EngineDeps& deps) {
  std::pair<EngineState, BotTurn> out;
  switch (condition) {
    case Condition::RuleBased: out = widen(start_topic(deps.script)); break;
    case Condition::PureLlm: out = widen(pure_start(deps.script, need_backend(deps), deps.config)); break;
    case Condition::SagPrompt: out = widen(sag_start(deps.script, need_backend(deps), deps.config)); break;
    case Condition::Ssag: out = widen(ssag_start(deps.script, need_backend(deps), deps.config)); break;
  }
  if (condition != Condition::RuleBased) out.second.options = suggested_options(deps.script, out.first);
  return out;
}

std::pair<EngineState, BotTurn> engine_step(const EngineState& state, const UserInput& input,
                                            const EngineDeps& deps) {
  std::pair<EngineState, BotTurn> out;
  if (auto s = std::get_if<RuleSessionState>(&state)) {
    return widen(rule_step(deps.script, *s, input));
  } else if (auto s = std::get_if<PureSessionState>(&state)) {
    out = widen(pure_step(deps.script, *s, input, need_backend(deps), deps.config));
  } else if (auto s = std::get_if<SagSessionState>(&state)) {
    out = widen(sag_step(deps.script, *s, input, need_backend(deps), deps.config));
  } else {
    const auto& ssag = std::get<SsagSessionState>(state);
    out = widen(ssag_step(deps.script, ssag, input, need_backend(deps), need_label_map(deps), deps.config));
  }
  out.second.options = suggested_options(deps.script, out.first);
  return out;
}

std::vector<TurnOption> suggested_options(const DialogueScript& script, const EngineState& state) {
  if (is_completed(state)) return {};
  if (auto s = std::get_if<RuleSessionState>(&state)) return pending_options(script, *s);
  if (auto s = std::get_if<SagSessionState>(&state)) {
    bool at_branch = !s->frontier.empty() && std::all_of(s->frontier.begin(), s->frontier.end(), [&](const auto& id) {
      return script.node(id).kind == NodeKind::UserOption;
    });
    return at_branch ? as_options(script, s->frontier) : std::vector<TurnOption>{};
  }
  if (auto s = std::get_if<SsagSessionState>(&state)) return as_options(script, ssag_pending_branch(script, *s));
  return {};
}

std::string display_text(const DialogueScript& script, const UserInput& input) {
  if (input.option_id && input.text.empty()) {
    if (const auto* node = script.find(*input.option_id)) return node->text;
  }
  return input.text;
}

}  // namespace scriptalign
