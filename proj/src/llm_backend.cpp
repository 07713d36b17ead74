#include "scriptalign/llm_backend.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "scriptalign/rule_engine.hpp"
#include "scriptalign/script_model.hpp"

namespace scriptalign {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::Assistant: return "assistant";
    case Role::User: return "user";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "assistant") return Role::Assistant;
  if (text == "user") return Role::User;
  throw BadRequest("unknown role \"" + std::string(text) + "\"");
}

std::vector<ChatMessage> normalize_messages(const std::vector<ChatMessage>& messages) {
  std::vector<ChatMessage> out;
  for (const auto& message : messages) {
    if (!out.empty() && out.back().role == message.role) {
      out.back().text += "\n\n" + message.text;
    } else {
      out.push_back(message);
    }
  }
  return out;
}

void check_request(const CompletionRequest& request) {
  if (request.messages.empty()) throw BadRequest("completion request has no messages");
  if (request.temperature < 0.0) throw BadRequest("temperature must be >= 0");
}

nlohmann::json request_to_json(const CompletionRequest& request) {
  auto messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"text", m.text}});
  return {{"system_prompt", request.system_prompt},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"tag", request.tag}};
}

CompletionRequest request_from_json(const nlohmann::json& j) {
  CompletionRequest request;
  j.at("system_prompt").get_to(request.system_prompt);
  for (const auto& m : j.at("messages"))
    request.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
  j.at("temperature").get_to(request.temperature);
  j.at("max_tokens").get_to(request.max_tokens);
  j.at("tag").get_to(request.tag);
  return request;
}

std::string canonical_request(const CompletionRequest& request) {
  auto normalized = request;
  normalized.messages = normalize_messages(request.messages);
  return request_to_json(normalized).dump();
}

std::string request_hash(const CompletionRequest& request) {
  const auto canonical = canonical_request(request);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr);
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

Completion Backend::complete(const CompletionRequest& request) {
  if (request.max_tokens <= 0)
    throw BudgetExceeded("request \"" + request.tag + "\" has no token budget (max_tokens=" +
                         std::to_string(request.max_tokens) + ")");
  check_request(request);
  return do_complete(request);
}

// ---------------------------------------------------------------------------

std::string render_block(std::string_view name, const nlohmann::json& payload) {
  std::string out = "<<<";
  out += name;
  out += "\n";
  out += payload.dump(2);
  out += "\n";
  out += name;
  out += ">>>";
  return out;
}

std::optional<nlohmann::json> extract_block(std::string_view prompt, std::string_view name) {
  const std::string open = "<<<" + std::string(name) + "\n";
  const std::string close = "\n" + std::string(name) + ">>>";
  auto begin = prompt.find(open);
  if (begin == std::string_view::npos) return std::nullopt;
  begin += open.size();
  auto end = prompt.find(close, begin);
  if (end == std::string_view::npos) return std::nullopt;
  auto parsed = nlohmann::json::parse(prompt.substr(begin, end - begin), nullptr, false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

namespace {

std::string join_bubbles(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& part : parts) {
    if (part.empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += part;
  }
  return out;
}

std::string follow_script_context(const nlohmann::json& context) {
  if (!context.contains("next") || context["next"].is_null()) return std::string(ScriptFaithfulMock::kGenericReflection);

  std::vector<ScriptNode> nodes;
  for (const auto& row : context.at("nodes")) {
    ScriptNode node;
    node.id = row.at("id").get<std::string>();
    node.kind = parse_node_kind(row.at("kind").get<std::string>()).value_or(NodeKind::Reflection);
    node.speaker = node.kind == NodeKind::UserOption ? Speaker::User : Speaker::Bot;
    node.text = row.at("text").get<std::string>();
    node.children = row.at("children").get<std::vector<std::string>>();
    nodes.push_back(std::move(node));
  }
  const auto next = context["next"].get<std::string>();
  DialogueScript mini(context.value("topic_id", std::string()), "", Framework::MI, next, std::move(nodes));
  if (!mini.find(next)) return std::string(ScriptFaithfulMock::kGenericReflection);

  std::vector<std::string> bubbles;
  bool terminal = false;
  try {
    auto chain = bot_chain(mini, next);
    for (const auto& id : chain.node_ids) bubbles.push_back(mini.node(id).text);
    terminal = chain.ends_at_terminal;
  } catch (const StructureError&) {
    // The chain ran into an elided subtree; say what is visible.
    bubbles = {mini.node(next).text};
  }
  if (terminal) bubbles.emplace_back(kClosingMarker);
  return join_bubbles(bubbles);
}

std::string answer_strategy_context(const nlohmann::json& context) {
  auto code_for = [&](std::string_view behavior) -> std::string {
    for (const auto& label : context.value("labels", nlohmann::json::array())) {
      if (label.value("behavior", "") == behavior) return label.value("code", "");
    }
    return std::string(behavior);
  };
  const auto last = context.contains("last_strategy") && context["last_strategy"].is_string()
                        ? context["last_strategy"].get<std::string>()
                        : std::string();
  if (last == "AskQuestion" || last == "GiveInformation") return code_for("ReflectiveListening");
  if (context.value("pending_questions", 0) > 0) return code_for("AskQuestion");
  if (context.value("pending_info", 0) > 0) return code_for("GiveInformation");
  return code_for("AskQuestion");
}

}  // namespace

Completion ScriptFaithfulMock::do_complete(const CompletionRequest& request) {
  if (auto expert = extract_block(request.system_prompt, kExpertContentBlock)) {
    std::vector<std::string> bubbles{expert->value("text", std::string())};
    if (expert->value("closing", false)) bubbles.emplace_back(kClosingMarker);
    return {join_bubbles(bubbles), {}};
  }
  if (auto strategy = extract_block(request.system_prompt, kStrategyContextBlock))
    return {answer_strategy_context(*strategy), {}};
  if (auto context = extract_block(request.system_prompt, kScriptContextBlock))
    return {follow_script_context(*context), {}};
  return {std::string(kGenericReflection), {}};
}

Completion FreeformMock::do_complete(const CompletionRequest&) { return {std::string(kFreeformSentence), {}}; }

// ---------------------------------------------------------------------------

namespace {

nlohmann::json completion_to_json(const Completion& completion) {
  nlohmann::json usage = nlohmann::json::object();
  if (completion.usage.prompt_tokens) usage["prompt_tokens"] = *completion.usage.prompt_tokens;
  if (completion.usage.completion_tokens) usage["completion_tokens"] = *completion.usage.completion_tokens;
  return {{"text", completion.text}, {"usage", usage}};
}

Completion completion_from_json(const nlohmann::json& j) {
  Completion completion;
  j.at("text").get_to(completion.text);
  if (auto usage = j.find("usage"); usage != j.end()) {
    if (usage->contains("prompt_tokens")) completion.usage.prompt_tokens = (*usage)["prompt_tokens"].get<int>();
    if (usage->contains("completion_tokens"))
      completion.usage.completion_tokens = (*usage)["completion_tokens"].get<int>();
  }
  return completion;
}

}  // namespace

ReplayMock::ReplayMock(std::vector<RecordingEntry> entries) {
  for (auto& entry : entries) {
    auto hash = entry.request_hash;
    entries_.insert_or_assign(std::move(hash), std::move(entry));
  }
}

std::unique_ptr<ReplayMock> ReplayMock::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read recording " + path.string());
  std::vector<RecordingEntry> entries;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("corrupt recording line in " + path.string());
    if (!header_seen) {
      if (j.value("format", "") != kRecordingFormat) throw IoError(path.string() + " is not a recording");
      header_seen = true;
      continue;
    }
    entries.push_back({j.at("request_hash").get<std::string>(), request_from_json(j.at("request")),
                       completion_from_json(j.at("response"))});
  }
  if (!header_seen) throw IoError(path.string() + " has no recording header");
  return std::make_unique<ReplayMock>(std::move(entries));
}

Completion ReplayMock::do_complete(const CompletionRequest& request) {
  const auto hash = request_hash(request);
  auto it = entries_.find(hash);
  if (it == entries_.end()) throw ReplayMiss("no recorded response for request " + hash + " (" + request.tag + ")");
  if (canonical_request(it->second.request) != canonical_request(request))
    throw CollisionError("recorded request under hash " + hash + " differs from the incoming request");
  return it->second.response;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path sink)
    : inner_(std::move(inner)), sink_(std::move(sink)) {
  std::ofstream out(sink_, std::ios::trunc);
  if (!out) throw IoError("cannot write recording " + sink_.string());
  out << nlohmann::json{{"format", kRecordingFormat}, {"version", 1}}.dump() << "\n";
}

std::size_t RecordingBackend::recorded() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

Completion RecordingBackend::do_complete(const CompletionRequest& request) {
  auto completion = inner_->complete(request);
  const auto hash = request_hash(request);
  const auto canonical = canonical_request(request);
  std::lock_guard lock(mutex_);
  if (auto it = seen_.find(hash); it != seen_.end()) {
    if (it->second != canonical) throw CollisionError("two distinct requests share hash " + hash);
    return completion;
  }
  seen_.emplace(hash, canonical);
  std::ofstream out(sink_, std::ios::app);
  if (!out) throw IoError("cannot append to recording " + sink_.string());
  nlohmann::json entry{{"request_hash", hash}, {"request", request_to_json(request)},
                       {"response", completion_to_json(completion)}};
  out << entry.dump() << "\n";
  return completion;
}

// ---------------------------------------------------------------------------

std::optional<LiveHttpConfig> LiveHttpConfig::from_env() {
  const char* base = std::getenv("LLM_API_BASE");
  if (!base || !*base) return std::nullopt;
  LiveHttpConfig config;
  config.base_url = base;
  if (const char* key = std::getenv("LLM_API_KEY")) config.api_key = key;
  const char* model = std::getenv("LLM_MODEL");
  config.model = model && *model ? model : "gpt-4";
  return config;
}

LiveHttpBackend::LiveHttpBackend(LiveHttpConfig config)
    : config_(std::move(config)), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(config_.base_url, match, url)) throw BadRequest("invalid LLM base URL " + config_.base_url);
  scheme_host_ = match[1].str();
  path_prefix_ = match[2].matched ? match[2].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

Completion LiveHttpBackend::do_complete(const CompletionRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  auto messages = nlohmann::json::array();
  if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  for (const auto& m : normalize_messages(request.messages))
    messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  body["messages"] = std::move(messages);
  const auto payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(backoff);
      backoff *= 2;
    }
    httplib::Client client(scheme_host_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);
    auto response = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
    if (!response) {
      last_error = "transport error: " + httplib::to_string(response.error());
      continue;
    }
    if (response->status >= 500) {
      last_error = "server error " + std::to_string(response->status);
      continue;
    }
    if (response->status != 200) {
      throw Error(ErrorCode::Network, "completion endpoint returned " + std::to_string(response->status) + ": " +
                                          response->body.substr(0, 200));
    }
    auto parsed = nlohmann::json::parse(response->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty())
      throw Error(ErrorCode::Network, "malformed completion response");
    Completion completion;
    const auto& message = parsed["choices"][0]["message"];
    completion.text = message.value("content", std::string());
    if (auto usage = parsed.find("usage"); usage != parsed.end() && usage->is_object()) {
      if (usage->contains("prompt_tokens")) completion.usage.prompt_tokens = (*usage)["prompt_tokens"].get<int>();
      if (usage->contains("completion_tokens"))
        completion.usage.completion_tokens = (*usage)["completion_tokens"].get<int>();
    }
    return completion;
  }
  throw NetworkError(last_error + " after " + std::to_string(config_.retries) + " retries");
}

// ---------------------------------------------------------------------------

Completion CallLogBackend::do_complete(const CompletionRequest& request) {
  auto completion = inner_.complete(request);
  calls_.push_back({request.tag, completion.text});
  return completion;
}

Completion SequenceBackend::do_complete(const CompletionRequest& request) {
  if (next_ >= calls_.size()) throw ReplayMiss("event log has no more backend responses (" + request.tag + ")");
  const auto& call = calls_[next_];
  if (call.tag != request.tag)
    throw ReplayMiss("event log expected a \"" + call.tag + "\" call but engine issued \"" + request.tag + "\"");
  ++next_;
  return {call.text, {}};
}

}  // namespace scriptalign
