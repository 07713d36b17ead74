#include "scriptalign/sag_engine.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <regex>

#include "scriptalign/rule_engine.hpp"
#include "scriptalign/text_similarity.hpp"

namespace scriptalign {

EngineConfig EngineConfig::with_default_assets() {
  EngineConfig config;
  config.prompts = std::make_shared<const PromptTemplates>(PromptTemplates::load(default_assets_dir()));
  return config;
}

int estimate_tokens(std::string_view text) { return static_cast<int>((text.size() + 3) / 4); }

void to_json(nlohmann::json& j, const ChatMessage& message) {
  j = {{"role", to_string(message.role)}, {"text", message.text}};
}

void from_json(const nlohmann::json& j, ChatMessage& message) {
  message.role = parse_role(j.at("role").get<std::string>());
  j.at("text").get_to(message.text);
}

void to_json(nlohmann::json& j, const SagSessionState& state) {
  j = {{"topic_id", state.topic_id},
       {"history", state.history},
       {"frontier", state.frontier},
       {"matched_questions", state.matched_questions},
       {"matched_sequence", state.matched_sequence},
       {"completed", state.completed}};
}

void from_json(const nlohmann::json& j, SagSessionState& state) {
  j.at("topic_id").get_to(state.topic_id);
  j.at("history").get_to(state.history);
  j.at("frontier").get_to(state.frontier);
  j.at("matched_questions").get_to(state.matched_questions);
  j.at("matched_sequence").get_to(state.matched_sequence);
  j.at("completed").get_to(state.completed);
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxSkippedNodes = 2;

void append_lookahead(const DialogueScript& script, const ScriptNode& from, int skipped,
                      std::vector<std::string>& out) {
  std::deque<std::pair<const ScriptNode*, int>> queue;
  for (const auto& child : from.children) queue.emplace_back(&script.node(child), skipped);
  while (!queue.empty()) {
    auto [node, hops] = queue.front();
    queue.pop_front();
    if (node->kind == NodeKind::UserOption) continue;
    if (std::find(out.begin(), out.end(), node->id) == out.end()) out.push_back(node->id);
    if (hops >= kMaxSkippedNodes || node->kind == NodeKind::Terminal || script.is_branch_point(*node)) continue;
    for (const auto& child : node->children) queue.emplace_back(&script.node(child), hops + 1);
  }
}

}  // namespace

std::vector<std::string> frontier_after(const DialogueScript& script, std::string_view node_id) {
  const auto& node = script.node(node_id);
  if (node.kind == NodeKind::Terminal) return {};
  if (script.is_branch_point(node)) return node.children;
  std::vector<std::string> out;
  append_lookahead(script, node, 0, out);
  return out;
}

std::vector<std::string> initial_frontier(const DialogueScript& script) {
  const auto& root = script.root();
  std::vector<std::string> out{root.id};
  if (root.kind != NodeKind::Terminal && !script.is_branch_point(root)) append_lookahead(script, root, 1, out);
  return out;
}

TrackResult track_position(const DialogueScript& script, std::string_view bot_text,
                           const std::vector<std::string>& frontier, double threshold) {
  TrackResult result;
  result.new_frontier = frontier;
  const ScriptNode* best = nullptr;
  for (const auto& id : frontier) {
    const auto& node = script.node(id);
    if (node.speaker != Speaker::Bot) continue;
    const double similarity = fuzzy_similarity(bot_text, node.text);
    if (!best || similarity > result.best_similarity) {
      best = &node;
      result.best_similarity = similarity;
    }
  }
  if (best && result.best_similarity >= threshold) {
    result.matched_node_id = best->id;
    result.new_frontier = frontier_after(script, best->id);
  }
  return result;
}

std::string resolve_branch(const DialogueScript& script, const std::vector<std::string>& options,
                           std::string_view user_text, double threshold) {
  std::string chosen = options.front();
  double best = -1.0;
  for (const auto& id : options) {
    const double similarity = fuzzy_similarity(user_text, script.node(id).text);
    if (similarity > best) {
      best = similarity;
      chosen = id;
    }
  }
  return best >= threshold ? chosen : options.front();
}

bool split_generated(std::string_view text, std::vector<std::string>& bubbles) {
  std::string body(text);
  bool marker = false;
  for (auto pos = body.find(kClosingMarker); pos != std::string::npos; pos = body.find(kClosingMarker)) {
    body.erase(pos, kClosingMarker.size());
    marker = true;
  }
  static const std::regex blank_line(R"(\n[ \t\r]*\n)");
  std::sregex_token_iterator it(body.begin(), body.end(), blank_line, -1), end;
  for (; it != end; ++it) {
    std::string part = *it;
    const auto first = part.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = part.find_last_not_of(" \t\r\n");
    bubbles.push_back(part.substr(first, last - first + 1));
  }
  return marker;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json context_rows(const DialogueScript& script, std::optional<int> max_depth) {
  auto rows = nlohmann::json::array();
  for (const auto& row : bfs_serialize(script, max_depth)) {
    const auto& node = script.node(row.node_id);
    nlohmann::json entry{{"depth", row.depth},
                         {"id", row.node_id},
                         {"kind", to_string(row.kind)},
                         {"children", node.children},
                         {"text", row.text}};
    if (max_depth && row.depth >= *max_depth && !node.children.empty()) entry["note"] = "(subtree elided)";
    rows.push_back(std::move(entry));
  }
  return rows;
}

int tree_depth(const DialogueScript& script) {
  int depth = 0;
  for (const auto& row : bfs_serialize(script)) depth = std::max(depth, row.depth);
  return depth;
}

std::optional<std::string> next_bot_node(const DialogueScript& script, const std::vector<std::string>& frontier) {
  for (const auto& id : frontier)
    if (script.node(id).speaker == Speaker::Bot) return id;
  return std::nullopt;
}

}  // namespace

CompletionRequest build_sag_prompt(const DialogueScript& script, const std::vector<ChatMessage>& history,
                                   const std::vector<std::string>& frontier, const EngineConfig& config) {
  nlohmann::json context{{"topic_id", script.topic_id()},
                         {"title", script.title()},
                         {"framework", to_string(script.framework())},
                         {"frontier", frontier}};
  auto next = next_bot_node(script, frontier);
  context["next"] = next ? nlohmann::json(*next) : nlohmann::json();

  // Whole tree first, then ever shallower listings down to depth 1.
  std::vector<std::optional<int>> depths{std::nullopt};
  for (int depth = tree_depth(script) - 1; depth >= 1; --depth) depths.emplace_back(depth);

  std::string block;
  bool fits = false;
  for (const auto& depth : depths) {
    context["nodes"] = context_rows(script, depth);
    block = render_block(kScriptContextBlock, context);
    if (estimate_tokens(block) <= config.token_budget) {
      fits = true;
      break;
    }
  }
  if (!fits) {
    throw PromptTooLarge("script " + script.topic_id() + " does not fit a " + std::to_string(config.token_budget) +
                         "-token budget even at depth 1");
  }

  CompletionRequest request;
  request.tag = "sag.step";
  request.temperature = kGenerationTemperature;
  request.system_prompt = render_template(config.prompts->get("sag/system"),
                                          {{"title", script.title()},
                                           {"framework", std::string(to_string(script.framework()))},
                                           {"closing_marker", std::string(kClosingMarker)},
                                           {"script_context", block}});
  request.messages = history;
  if (request.messages.empty()) request.messages.push_back({Role::User, std::string(kSessionStartMessage)});
  return request;
}

namespace {

BotTurn absorb_response(const DialogueScript& script, SagSessionState& state, const std::string& text,
                        const EngineConfig& config) {
  BotTurn turn;
  std::vector<std::string> bubbles;
  const bool marker = split_generated(text, bubbles);
  for (const auto& bubble : bubbles) {
    auto tracked = track_position(script, bubble, state.frontier, config.match_threshold);
    turn.texts.push_back(bubble);
    turn.matched_nodes.push_back(tracked.matched_node_id);
    if (!tracked.matched_node_id) continue;
    const auto& node = script.node(*tracked.matched_node_id);
    state.matched_sequence.push_back(node.id);
    state.frontier = std::move(tracked.new_frontier);
    if (node.kind == NodeKind::TherapeuticQuestion) state.matched_questions.insert(node.id);
    if (node.kind == NodeKind::Terminal) state.completed = true;
  }
  if (marker && !state.completed) {
    // A Terminal with no text can only be reached through the marker.
    for (const auto& id : state.frontier) {
      if (script.node(id).kind == NodeKind::Terminal) {
        state.matched_sequence.push_back(id);
        break;
      }
    }
    state.completed = true;
  }
  if (state.completed) state.frontier.clear();
  std::string joined;
  for (const auto& bubble : bubbles) joined += (joined.empty() ? "" : "\n\n") + bubble;
  state.history.push_back({Role::Assistant, joined});
  turn.done = state.completed;
  return turn;
}

}  // namespace

std::pair<SagSessionState, BotTurn> sag_start(const DialogueScript& script, Backend& backend,
                                              const EngineConfig& config) {
  SagSessionState state;
  state.topic_id = script.topic_id();
  state.frontier = initial_frontier(script);
  auto request = build_sag_prompt(script, state.history, state.frontier, config);
  auto completion = backend.complete(request);
  auto turn = absorb_response(script, state, completion.text, config);
  return {std::move(state), std::move(turn)};
}

std::pair<SagSessionState, BotTurn> sag_step(const DialogueScript& script, const SagSessionState& state,
                                             const UserInput& input, Backend& backend, const EngineConfig& config) {
  if (state.completed) throw SessionComplete("topic " + state.topic_id + " is already complete");

  SagSessionState next = state;
  std::string user_text = input.text;
  std::optional<std::string> resolved;
  const bool at_branch = !next.frontier.empty() && std::all_of(next.frontier.begin(), next.frontier.end(), [&](const auto& id) {
    return script.node(id).kind == NodeKind::UserOption;
  });

  if (input.option_id) {
    if (!at_branch || std::find(next.frontier.begin(), next.frontier.end(), *input.option_id) == next.frontier.end())
      throw InvalidOption("option \"" + *input.option_id + "\" is not offered");
    resolved = *input.option_id;
    if (user_text.empty()) user_text = script.node(*resolved).text;
  } else if (at_branch) {
    resolved = resolve_branch(script, next.frontier, user_text, config.branch_threshold);
  }
  if (resolved) {
    next.matched_sequence.push_back(*resolved);
    next.frontier = frontier_after(script, *resolved);
  }
  next.history.push_back({Role::User, user_text});

  auto request = build_sag_prompt(script, next.history, next.frontier, config);
  auto completion = backend.complete(request);
  auto turn = absorb_response(script, next, completion.text, config);
  turn.resolved_option = resolved;
  return {std::move(next), std::move(turn)};
}

// ---------------------------------------------------------------------------

std::vector<FinetunePair> export_finetune_pairs(const ScriptLibrary& library) {
  std::vector<FinetunePair> pairs;
  for (const auto& [topic_id, script] : library.scripts()) {
    std::vector<ChatMessage> context;
    std::function<void(const ScriptNode&)> walk = [&](const ScriptNode& node) {
      const auto saved = context.size();
      if (node.speaker == Speaker::User) {
        context.push_back({Role::User, node.text});
      } else if (!node.text.empty()) {
        if (!context.empty() && context.back().role == Role::Assistant)
          context.push_back({Role::User, std::string(kClientReplyPlaceholder)});
        pairs.push_back({topic_id, node.id, context, node.text});
        context.push_back({Role::Assistant, node.text});
      }
      for (const auto& child : node.children) walk(script.node(child));
      context.resize(saved);
    };
    walk(script.root());
  }
  return pairs;
}

nlohmann::json finetune_pair_to_json(const FinetunePair& pair) {
  return {{"topic_id", pair.topic_id}, {"node_id", pair.node_id}, {"context", pair.context}, {"target", pair.target}};
}

}  // namespace scriptalign
