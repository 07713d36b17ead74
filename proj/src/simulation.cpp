#include "scriptalign/simulation.hpp"

#include <algorithm>

#include "scriptalign/errors.hpp"

namespace scriptalign {

namespace {

const std::vector<std::string> kOnTopicAnswers = {
    "I think I could manage a short walk after work.",
    "Honestly I am not sure, but I want to try.",
    "My schedule is busy, so it is hard to plan exercise.",
    "That makes sense to me.",
    "I would like to feel more energetic during the day.",
    "A friend of mine goes jogging and seems happier for it.",
};

const std::vector<std::string> kOffTopicAnswers = {
    "Did you see the football game last night?",
    "What is the capital of Australia?",
    "Can you recommend a good pizza place?",
    "I wonder whether it will rain tomorrow.",
    "Tell me a joke about computers.",
};

}  // namespace

SimProfile make_profile(std::string_view name, int digress_every, int max_turns) {
  if (digress_every < 1) throw BadRequest("digress_every must be at least 1");
  if (max_turns < 1) throw BadRequest("max_turns must be at least 1");
  SimProfile profile;
  profile.name = std::string(name);
  profile.digress_every = digress_every;
  profile.max_turns = max_turns;
  profile.free_text_bank = kOnTopicAnswers;
  profile.off_topic_bank = kOffTopicAnswers;
  if (name == "compliant") profile.kind = ProfileKind::Compliant;
  else if (name == "digressive") profile.kind = ProfileKind::Digressive;
  else if (name == "adversarial") profile.kind = ProfileKind::Adversarial;
  else throw BadRequest("unknown profile \"" + std::string(name) + "\"");
  return profile;
}

SimulatedUser::SimulatedUser(SimProfile profile, std::uint64_t seed, std::vector<std::string> choices)
    : profile_(std::move(profile)), rng_(seed), choices_(std::move(choices)) {}

std::string SimulatedUser::pick(const std::vector<std::string>& bank) {
  if (bank.empty()) return "Okay.";
  return bank[rng_() % bank.size()];
}

UserInput SimulatedUser::next(const BotTurn& last, bool click) {
  ++sent_;
  const bool off_topic = profile_.kind == ProfileKind::Adversarial ||
                         (profile_.kind == ProfileKind::Digressive && sent_ % profile_.digress_every == 0);
  if (off_topic) return UserInput::free_text(pick(profile_.off_topic_bank));
  if (!last.options.empty()) {
    const TurnOption* chosen = nullptr;
    if (next_choice_ < choices_.size()) {
      const auto& wanted = choices_[next_choice_++];
      auto it = std::find_if(last.options.begin(), last.options.end(),
                             [&](const auto& o) { return o.option_id == wanted; });
      if (it != last.options.end()) chosen = &*it;
    }
    if (!chosen) chosen = &last.options[rng_() % last.options.size()];
    return click ? UserInput::option(chosen->option_id) : UserInput::free_text(chosen->label);
  }
  return UserInput::free_text(pick(profile_.free_text_bank));
}

void append_bot_turns(Transcript& transcript, const BotTurn& turn, std::int64_t at) {
  for (std::size_t i = 0; i < turn.texts.size(); ++i) {
    TranscriptTurn t;
    t.role = Speaker::Bot;
    t.text = turn.texts[i];
    t.timestamp = at;
    if (i < turn.matched_nodes.size()) t.matched_node_id = turn.matched_nodes[i];
    t.strategy = turn.strategy;
    transcript.turns.push_back(std::move(t));
  }
}

Transcript simulate_session(const SimulationSpec& spec, const EngineDeps& deps) {
  Transcript transcript;
  transcript.session_id = spec.session_id;
  transcript.condition = spec.condition;
  transcript.topic_id = deps.script.topic_id();

  std::int64_t at = 0;
  auto [state, turn] = engine_start(spec.condition, deps);
  append_bot_turns(transcript, turn, at);

  SimulatedUser user(spec.profile, spec.seed, spec.choices);
  const bool click = spec.condition == Condition::RuleBased;
  while (!is_completed(state) && user.messages_sent() < spec.profile.max_turns) {
    at += 1000;
    auto input = user.next(turn, click);
    TranscriptTurn said;
    said.role = Speaker::User;
    said.text = display_text(deps.script, input);
    said.timestamp = at;
    said.option_id = input.option_id;
    auto [next_state, next_turn] = engine_step(state, input, deps);
    if (!said.option_id) said.option_id = next_turn.resolved_option;
    transcript.turns.push_back(std::move(said));
    append_bot_turns(transcript, next_turn, at);
    state = std::move(next_state);
    turn = std::move(next_turn);
  }
  transcript.completed_flag = is_completed(state);
  return transcript;
}

std::vector<std::string> choices_on(const DialogueScript& script, const NodePath& path) {
  std::vector<std::string> out;
  for (const auto& id : path)
    if (script.node(id).kind == NodeKind::UserOption) out.push_back(id);
  return out;
}

Transcript replay_path(Condition condition, const NodePath& path, const EngineDeps& deps,
                       const std::string& session_id) {
  SimulationSpec spec;
  spec.condition = condition;
  spec.session_id = session_id;
  spec.profile = make_profile("compliant");
  spec.choices = choices_on(deps.script, path);
  return simulate_session(spec, deps);
}

}  // namespace scriptalign
