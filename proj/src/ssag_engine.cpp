#include "scriptalign/ssag_engine.hpp"

#include <algorithm>

#include "scriptalign/rule_engine.hpp"
#include "scriptalign/sag_engine.hpp"
#include "scriptalign/text_similarity.hpp"

namespace scriptalign {

void to_json(nlohmann::json& j, const SsagSessionState& state) {
  j = {{"topic_id", state.topic_id},
       {"history", state.history},
       {"realized_path", state.realized_path},
       {"pending_questions", state.pending_questions},
       {"info_pool", state.info_pool},
       {"posed", state.posed},
       {"non_question_streak", state.non_question_streak},
       {"completed", state.completed}};
  j["last_strategy"] = state.last_strategy ? nlohmann::json(to_string(*state.last_strategy)) : nlohmann::json();
}

void from_json(const nlohmann::json& j, SsagSessionState& state) {
  j.at("topic_id").get_to(state.topic_id);
  j.at("history").get_to(state.history);
  j.at("realized_path").get_to(state.realized_path);
  j.at("pending_questions").get_to(state.pending_questions);
  j.at("info_pool").get_to(state.info_pool);
  j.at("posed").get_to(state.posed);
  j.at("non_question_streak").get_to(state.non_question_streak);
  j.at("completed").get_to(state.completed);
  state.last_strategy.reset();
  if (const auto& last = j.at("last_strategy"); !last.is_null())
    state.last_strategy = parse_strategy_kind(last.get<std::string>());
}

StrategyKind StrategyPrediction::primary() const {
  auto has = [&](StrategyKind kind) {
    return std::any_of(labels.begin(), labels.end(), [&](const StrategyLabel& l) { return l.kind == kind; });
  };
  if (has(StrategyKind::AskQuestion)) return StrategyKind::AskQuestion;
  if (has(StrategyKind::GiveInformation)) return StrategyKind::GiveInformation;
  return StrategyKind::ReflectiveListening;
}

// ---------------------------------------------------------------------------

namespace {

void extend_segment(const DialogueScript& script, SsagSessionState& state, std::string start_id) {
  for (std::size_t guard = 0; guard <= script.nodes().size(); ++guard) {
    const auto& node = script.node(start_id);
    state.realized_path.push_back(node.id);
    if (node.kind == NodeKind::TherapeuticQuestion && !state.posed.count(node.id))
      state.pending_questions.push_back(node.id);
    if (node.kind == NodeKind::Information || node.kind == NodeKind::Advice) state.info_pool.push_back(node.id);
    if (node.kind == NodeKind::Terminal || script.is_branch_point(node) || node.children.empty()) return;
    start_id = node.children.front();
  }
}

const ScriptNode& segment_end(const DialogueScript& script, const SsagSessionState& state) {
  return script.node(state.realized_path.back());
}

std::string last_user_text(const std::vector<ChatMessage>& history) {
  for (auto it = history.rbegin(); it != history.rend(); ++it)
    if (it->role == Role::User) return it->text;
  return {};
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "\n\n") + p;
  return out;
}

CompletionRequest build_render_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                      const ExpertContent& content, bool closing, const EngineConfig& config) {
  CompletionRequest request;
  request.tag = "ssag.render";
  request.temperature = kGenerationTemperature;
  const std::string closing_instruction =
      closing ? "This ends the conversation: after the content, end your message with " + std::string(kClosingMarker) + "."
              : std::string();
  request.system_prompt = render_template(
      config.prompts->get("ssag/render"),
      {{"title", script.title()},
       {"closing_instruction", closing_instruction},
       {"expert_content",
        render_block(kExpertContentBlock, {{"node_id", content.node_id}, {"text", content.text}, {"closing", closing}})}});
  request.messages = history;
  if (request.messages.empty()) request.messages.push_back({Role::User, std::string(kSessionStartMessage)});
  return request;
}

CompletionRequest build_reflect_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                       const EngineConfig& config) {
  CompletionRequest request;
  request.tag = "ssag.reflect";
  request.temperature = kGenerationTemperature;
  request.system_prompt = render_template(config.prompts->get("ssag/reflect"), {{"title", script.title()}});
  request.messages = history;
  return request;
}

/// Index of the bubble that carries the content, if it was delivered.
std::optional<std::size_t> delivered_in(const std::vector<std::string>& bubbles, const ExpertContent& content,
                                        double threshold) {
  std::optional<std::size_t> best;
  double best_similarity = -1.0;
  for (std::size_t i = 0; i < bubbles.size(); ++i) {
    const double similarity =
        bubbles[i].find(content.text) != std::string::npos ? 1.0 : fuzzy_similarity(bubbles[i], content.text);
    if (similarity > best_similarity) {
      best_similarity = similarity;
      best = i;
    }
  }
  if (best && best_similarity >= threshold) return best;
  return std::nullopt;
}

/// Renders expert content with one retry, then falls back to the verbatim text.
BotTurn deliver(const DialogueScript& script, SsagSessionState& state, const ExpertContent& content,
                StrategyKind strategy, bool closing, Backend& backend, const EngineConfig& config) {
  auto request = build_render_prompt(script, state.history, content, closing, config);
  std::vector<std::string> bubbles;
  std::optional<std::size_t> carrier;
  for (int attempt = 0; attempt < 2 && !carrier; ++attempt) {
    if (attempt == 1) request.tag = "ssag.render.retry";
    bubbles.clear();
    split_generated(backend.complete(request).text, bubbles);
    carrier = delivered_in(bubbles, content, config.match_threshold);
  }
  if (!carrier) {
    bubbles = {content.text};
    carrier = 0;
  }

  BotTurn turn;
  turn.texts = bubbles;
  turn.matched_nodes.assign(bubbles.size(), std::nullopt);
  turn.matched_nodes[*carrier] = content.node_id;
  turn.strategy = std::string(to_string(strategy));

  state.posed.insert(content.node_id);
  std::erase(state.pending_questions, content.node_id);
  std::erase(state.info_pool, content.node_id);
  state.history.push_back({Role::Assistant, join(bubbles)});
  state.last_strategy = strategy;
  if (closing) state.completed = true;
  turn.done = state.completed;
  return turn;
}

BotTurn reflect(const DialogueScript& script, SsagSessionState& state, Backend& backend, const EngineConfig& config) {
  std::vector<std::string> bubbles;
  split_generated(backend.complete(build_reflect_prompt(script, state.history, config)).text, bubbles);
  if (bubbles.empty()) bubbles.emplace_back(ScriptFaithfulMock::kGenericReflection);
  BotTurn turn;
  turn.texts = bubbles;
  turn.matched_nodes.assign(bubbles.size(), std::nullopt);
  turn.strategy = std::string(to_string(StrategyKind::ReflectiveListening));
  state.history.push_back({Role::Assistant, join(bubbles)});
  state.last_strategy = StrategyKind::ReflectiveListening;
  return turn;
}

}  // namespace

// ---------------------------------------------------------------------------

CompletionRequest build_predict_prompt(const std::vector<ChatMessage>& history, const LabelMap& label_map,
                                       const PredictionContext& context, const EngineConfig& config) {
  const bool any_user = std::any_of(history.begin(), history.end(), [](const ChatMessage& m) { return m.role == Role::User; });
  if (!any_user) throw BadRequest("strategy prediction needs at least one user turn");

  std::string label_list;
  auto labels = nlohmann::json::array();
  for (const auto& entry : label_map.entries) {
    label_list += (label_list.empty() ? "" : ", ") + entry.code;
    labels.push_back({{"code", entry.code}, {"behavior", to_string(entry.kind)}});
  }
  nlohmann::json block{{"labels", labels},
                       {"pending_questions", context.pending_questions},
                       {"pending_info", context.pending_info},
                       {"question_due", context.question_due}};
  block["last_strategy"] = context.last_strategy ? nlohmann::json(to_string(*context.last_strategy)) : nlohmann::json();

  CompletionRequest request;
  request.tag = "ssag.predict";
  request.temperature = kClassificationTemperature;
  request.max_tokens = 32;
  request.system_prompt = render_template(
      config.prompts->get("ssag/predict"),
      {{"title", context.title},
       {"label_list", label_list},
       {"nudge", context.question_due ? "\nThe conversation has gone several turns without a question; a question is due now."
                                      : ""},
       {"strategy_context", render_block(kStrategyContextBlock, block)}});
  const auto window = std::min(history.size(), config.history_window);
  request.messages.assign(history.end() - static_cast<std::ptrdiff_t>(window), history.end());
  if (std::none_of(request.messages.begin(), request.messages.end(),
                   [](const ChatMessage& m) { return m.role == Role::User; })) {
    request.messages.insert(request.messages.begin(), {Role::User, last_user_text(history)});
  }
  return request;
}

StrategyPrediction predict_strategy(const std::vector<ChatMessage>& history, Backend& backend,
                                    const LabelMap& label_map, const PredictionContext& context,
                                    const EngineConfig& config) {
  auto completion = backend.complete(build_predict_prompt(history, label_map, context, config));
  auto parsed = parse_labels(completion.text, label_map);
  return {std::move(parsed.labels), std::move(completion.text), parsed.warning};
}

std::optional<ExpertContent> retrieve_expert_content(const DialogueScript& script, const SsagSessionState& state,
                                                     StrategyKind strategy) {
  if (strategy == StrategyKind::AskQuestion) {
    if (state.pending_questions.empty()) return std::nullopt;
    const auto& node = script.node(state.pending_questions.front());
    return ExpertContent{node.id, node.text};
  }
  if (strategy == StrategyKind::GiveInformation) {
    if (state.info_pool.empty()) return std::nullopt;
    const auto user = last_user_text(state.history);
    const ScriptNode* best = nullptr;
    double best_similarity = -1.0;
    for (const auto& id : state.info_pool) {
      const auto& node = script.node(id);
      const double similarity = fuzzy_similarity(user, node.text);
      if (similarity > best_similarity) {
        best_similarity = similarity;
        best = &node;
      }
    }
    return ExpertContent{best->id, best->text};
  }
  throw WrongStrategy("expert content exists only for questions and information, not " +
                      std::string(to_string(strategy)));
}

std::vector<std::string> ssag_pending_branch(const DialogueScript& script, const SsagSessionState& state) {
  if (state.completed || !state.pending_questions.empty() || state.realized_path.empty()) return {};
  const auto& end = segment_end(script, state);
  if (!script.is_branch_point(end)) return {};
  return end.children;
}

std::pair<SsagSessionState, BotTurn> ssag_start(const DialogueScript& script, Backend& backend,
                                                const EngineConfig& config) {
  SsagSessionState state;
  state.topic_id = script.topic_id();
  extend_segment(script, state, script.root_id());

  if (auto question = retrieve_expert_content(script, state, StrategyKind::AskQuestion)) {
    auto turn = deliver(script, state, *question, StrategyKind::AskQuestion, false, backend, config);
    return {std::move(state), std::move(turn)};
  }
  if (!state.info_pool.empty()) {
    const auto& node = script.node(state.info_pool.front());
    auto turn = deliver(script, state, {node.id, node.text}, StrategyKind::GiveInformation, false, backend, config);
    return {std::move(state), std::move(turn)};
  }
  BotTurn turn;
  turn.texts = {std::string(kSsagGreeting)};
  turn.matched_nodes = {std::nullopt};
  state.history.push_back({Role::Assistant, std::string(kSsagGreeting)});
  return {std::move(state), std::move(turn)};
}

std::pair<SsagSessionState, BotTurn> ssag_step(const DialogueScript& script, const SsagSessionState& state,
                                               const UserInput& input, Backend& backend, const LabelMap& label_map,
                                               const EngineConfig& config) {
  if (state.completed) throw SessionComplete("topic " + state.topic_id + " is already complete");

  SsagSessionState next = state;
  std::string user_text = input.text;
  std::optional<std::string> resolved;

  // The reply to a posed branching question selects the next segment.
  for (auto options = ssag_pending_branch(script, next); !options.empty();
       options = ssag_pending_branch(script, next)) {
    std::string choice;
    if (input.option_id && !resolved) {
      if (std::find(options.begin(), options.end(), *input.option_id) == options.end())
        throw InvalidOption("option \"" + *input.option_id + "\" is not offered");
      choice = *input.option_id;
      if (user_text.empty()) user_text = script.node(choice).text;
    } else {
      choice = resolve_branch(script, options, user_text, config.branch_threshold);
    }
    if (!resolved) resolved = choice;
    next.realized_path.push_back(choice);
    extend_segment(script, next, script.node(choice).children.front());
  }
  if (input.option_id && !resolved) throw InvalidOption("option \"" + *input.option_id + "\" is not offered");
  next.history.push_back({Role::User, user_text});

  PredictionContext context;
  context.title = script.title();
  context.last_strategy = next.last_strategy;
  context.pending_questions = next.pending_questions.size();
  context.pending_info = next.info_pool.size();
  context.question_due = next.non_question_streak >= config.nudge_after;
  const auto prediction = predict_strategy(next.history, backend, label_map, context, config);
  const auto strategy = prediction.primary();
  next.non_question_streak = strategy == StrategyKind::AskQuestion ? 0 : next.non_question_streak + 1;

  BotTurn turn;
  const auto& end = segment_end(script, next);
  if (next.pending_questions.empty() && end.kind == NodeKind::Terminal) {
    ExpertContent closing{end.id, end.text.empty() ? std::string(kSsagFarewell) : end.text};
    turn = deliver(script, next, closing, strategy, true, backend, config);
  } else if (strategy == StrategyKind::AskQuestion || strategy == StrategyKind::GiveInformation) {
    if (auto content = retrieve_expert_content(script, next, strategy)) {
      turn = deliver(script, next, *content, strategy, false, backend, config);
    } else {
      turn = reflect(script, next, backend, config);
    }
  } else {
    turn = reflect(script, next, backend, config);
  }
  turn.resolved_option = resolved;
  return {std::move(next), std::move(turn)};
}

}  // namespace scriptalign
