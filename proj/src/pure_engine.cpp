#include "scriptalign/pure_engine.hpp"

#include "scriptalign/sag_engine.hpp"

namespace scriptalign {

void to_json(nlohmann::json& j, const PureSessionState& state) {
  j = {{"topic_id", state.topic_id}, {"history", state.history}, {"completed", state.completed}};
}

void from_json(const nlohmann::json& j, PureSessionState& state) {
  j.at("topic_id").get_to(state.topic_id);
  j.at("history").get_to(state.history);
  j.at("completed").get_to(state.completed);
}

CompletionRequest build_pure_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                    const EngineConfig& config) {
  CompletionRequest request;
  request.tag = "pure.step";
  request.temperature = kGenerationTemperature;
  request.system_prompt = render_template(config.prompts->get("pure/system"),
                                          {{"title", script.title()}, {"closing_marker", std::string(kClosingMarker)}});
  request.messages = history;
  if (request.messages.empty()) request.messages.push_back({Role::User, std::string(kSessionStartMessage)});
  return request;
}

namespace {

BotTurn absorb(PureSessionState& state, const std::string& text) {
  BotTurn turn;
  state.completed = split_generated(text, turn.texts);
  turn.matched_nodes.assign(turn.texts.size(), std::nullopt);
  std::string joined;
  for (const auto& t : turn.texts) joined += (joined.empty() ? "" : "\n\n") + t;
  state.history.push_back({Role::Assistant, joined});
  turn.done = state.completed;
  return turn;
}

}  // namespace

std::pair<PureSessionState, BotTurn> pure_start(const DialogueScript& script, Backend& backend,
                                                const EngineConfig& config) {
  PureSessionState state;
  state.topic_id = script.topic_id();
  auto completion = backend.complete(build_pure_prompt(script, state.history, config));
  auto turn = absorb(state, completion.text);
  return {std::move(state), std::move(turn)};
}

std::pair<PureSessionState, BotTurn> pure_step(const DialogueScript& script, const PureSessionState& state,
                                               const UserInput& input, Backend& backend, const EngineConfig& config) {
  if (state.completed) throw SessionComplete("topic " + state.topic_id + " is already complete");
  if (input.option_id) throw InvalidOption("this condition offers no options");
  PureSessionState next = state;
  next.history.push_back({Role::User, input.text});
  auto completion = backend.complete(build_pure_prompt(script, next.history, config));
  auto turn = absorb(next, completion.text);
  return {std::move(next), std::move(turn)};
}

}  // namespace scriptalign
