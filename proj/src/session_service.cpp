#include "scriptalign/session_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/rand.h>

#include "scriptalign/errors.hpp"
#include "scriptalign/simulation.hpp"

namespace scriptalign {

// --- surveys ----------------------------------------------------------------

std::map<std::string, SurveyInstrument> load_survey_instruments(const std::filesystem::path& dir) {
  std::map<std::string, SurveyInstrument> out;
  if (!std::filesystem::is_directory(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SyntaxError("invalid JSON in " + file.string());
    try {
      SurveyInstrument instrument;
      instrument.id = j.at("id").get<std::string>();
      instrument.title = j.value("title", instrument.id);
      for (const auto& item : j.at("items")) instrument.items.push_back({item.at("id"), item.at("text")});
      if (instrument.items.empty()) throw SchemaError("instrument " + instrument.id + " has no items");
      out[instrument.id] = std::move(instrument);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("malformed instrument " + file.string() + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json instrument_to_json(const SurveyInstrument& instrument) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : instrument.items) items.push_back({{"id", item.id}, {"text", item.text}});
  return {{"id", instrument.id}, {"title", instrument.title}, {"scale", {1, 5}}, {"items", items}};
}

// --- event log --------------------------------------------------------------

EventStore::EventStore(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file_.parent_path(), ec);
  }
  std::string content;
  if (std::filesystem::exists(file_)) {
    std::ifstream in(file_, std::ios::binary);
    if (!in) throw IoError("cannot read " + file_.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }

  std::size_t committed = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    std::string_view line(content.data() + pos, nl - pos);
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        if (nl + 1 == content.size()) break;
        throw IoError("corrupt event log line at byte " + std::to_string(pos) + " in " + file_.string());
      }
      groups_.push_back(std::move(j));
    }
    pos = nl + 1;
    committed = pos;
  }
  recovered_bytes_ = content.size() - committed;

  fd_ = ::open(file_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open " + file_.string() + ": " + std::strerror(errno));
  if (recovered_bytes_ > 0) {
    if (::ftruncate(fd_, static_cast<off_t>(committed)) != 0)
      throw IoError("cannot truncate " + file_.string() + ": " + std::strerror(errno));
    ::fsync(fd_);
  }
}

EventStore::~EventStore() {
  if (fd_ >= 0) ::close(fd_);
}

void EventStore::append(const nlohmann::json& group) {
  std::string line = group.dump() + "\n";
  std::lock_guard lock(mutex_);
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(fd_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("cannot append to " + file_.string() + ": " + std::strerror(errno));
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw IoError("cannot sync " + file_.string() + ": " + std::strerror(errno));
  groups_.push_back(group);
}

std::vector<nlohmann::json> EventStore::groups() const {
  std::lock_guard lock(mutex_);
  return groups_;
}

// --- service ----------------------------------------------------------------

std::string random_session_id() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw IoError("random generator failure");
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::string out;
  unsigned int buffer = 0;
  int bits = 0;
  for (unsigned char b : bytes) {
    buffer = (buffer << 8) | b;
    bits += 8;
    while (bits >= 6) {
      bits -= 6;
      out.push_back(kAlphabet[(buffer >> bits) & 0x3F]);
    }
  }
  if (bits > 0) out.push_back(kAlphabet[(buffer << (6 - bits)) & 0x3F]);
  return out;
}

struct SessionService::Session {
  std::mutex step_mutex;
  mutable std::mutex data_mutex;
  std::string id;
  Condition condition = Condition::RuleBased;
  std::string topic_id;
  std::string backend;
  std::int64_t created_at = 0;
  EngineState state;
  std::vector<nlohmann::json> events;
  std::set<std::string> surveys;
};

namespace {

nlohmann::json calls_to_json(const std::vector<CallLogBackend::Call>& calls) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : calls) out.push_back({{"tag", c.tag}, {"text", c.text}});
  return out;
}

std::vector<CallLogBackend::Call> calls_from_json(const nlohmann::json& j) {
  std::vector<CallLogBackend::Call> out;
  if (!j.is_array()) return out;
  for (const auto& c : j) out.push_back({c.at("tag").get<std::string>(), c.at("text").get<std::string>()});
  return out;
}

}  // namespace

SessionService::SessionService(ScriptLibrary library, ServiceOptions options)
    : library_(std::move(library)), options_(std::move(options)) {
  if (!options_.engine.prompts) options_.engine = EngineConfig::with_default_assets();
  store_ = std::make_unique<EventStore>(options_.data_dir / "events.jsonl");
  load();
}

SessionService::~SessionService() = default;

std::int64_t SessionService::now() const {
  if (options_.clock) return options_.clock();
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void SessionService::register_backend(const std::string& name, std::shared_ptr<Backend> backend) {
  std::lock_guard lock(backends_mutex_);
  backends_[name] = std::move(backend);
}

std::vector<std::string> SessionService::backend_names() const {
  std::lock_guard lock(backends_mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : backends_) out.push_back(name);
  return out;
}

std::shared_ptr<Backend> SessionService::backend_for(const std::string& name) const {
  std::lock_guard lock(backends_mutex_);
  auto it = backends_.find(name);
  if (it == backends_.end()) throw UnknownBackend("unknown backend \"" + name + "\"");
  return it->second;
}

EngineDeps SessionService::deps_for(const DialogueScript& script, Backend* backend) const {
  return EngineDeps{script, backend, options_.label_map.get(), options_.engine};
}

std::shared_ptr<SessionService::Session> SessionService::find_session(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFound("no session \"" + session_id + "\"");
  return it->second;
}

CreatedSession SessionService::create_session(Condition condition, const std::string& topic_id,
                                              const std::string& backend_name) {
  const auto& script = library_.topic(topic_id);
  std::shared_ptr<Backend> backend;
  std::string recorded_backend(kNoBackend);
  if (condition != Condition::RuleBased) {
    backend = backend_for(backend_name);
    recorded_backend = backend_name;
  }

  std::optional<CallLogBackend> log;
  if (backend) log.emplace(*backend);
  auto [state, turn] = engine_start(condition, deps_for(script, log ? &*log : nullptr));

  auto session = std::make_shared<Session>();
  session->condition = condition;
  session->topic_id = topic_id;
  session->backend = recorded_backend;
  session->created_at = now();
  session->state = state;

  nlohmann::json created{{"type", "Created"},
                         {"at", session->created_at},
                         {"condition", to_string(condition)},
                         {"topic_id", topic_id},
                         {"backend", recorded_backend},
                         {"turn", turn},
                         {"llm_calls", calls_to_json(log ? log->calls() : std::vector<CallLogBackend::Call>{})},
                         {"state", engine_state_to_json(state)}};
  nlohmann::json events = nlohmann::json::array({created});
  if (is_completed(state)) events.push_back({{"type", "Completed"}, {"at", session->created_at}});

  std::unique_lock lock(sessions_mutex_);
  do {
    session->id = options_.new_session_id ? options_.new_session_id() : random_session_id();
  } while (sessions_.count(session->id));
  store_->append({{"session_id", session->id}, {"events", events}});
  session->events.assign(events.begin(), events.end());
  sessions_[session->id] = session;
  return {session->id, turn};
}

BotTurn SessionService::post_message(const std::string& session_id, const UserInput& input) {
  auto session = find_session(session_id);
  std::unique_lock step(session->step_mutex, std::try_to_lock);
  if (!step.owns_lock()) throw Busy("session " + session_id + " is handling another message");

  EngineState state;
  {
    std::lock_guard data(session->data_mutex);
    state = session->state;
  }
  if (is_completed(state)) throw SessionComplete("session " + session_id + " is complete");

  const auto& script = library_.topic(session->topic_id);
  std::shared_ptr<Backend> backend;
  if (session->condition != Condition::RuleBased) backend = backend_for(session->backend);
  std::optional<CallLogBackend> log;
  if (backend) log.emplace(*backend);

  std::pair<EngineState, BotTurn> result;
  try {
    result = engine_step(state, input, deps_for(script, log ? &*log : nullptr));
  } catch (const Error& e) {
    nlohmann::json error{{"type", "Error"},
                         {"at", now()},
                         {"code", error_code_name(e.code())},
                         {"message", e.what()},
                         {"retriable", e.retriable()}};
    std::lock_guard data(session->data_mutex);
    store_->append({{"session_id", session_id}, {"events", nlohmann::json::array({error})}});
    session->events.push_back(error);
    throw;
  }
  auto& [next, turn] = result;

  const auto at = now();
  nlohmann::json events = nlohmann::json::array();
  events.push_back({{"type", "MessageIn"}, {"at", at}, {"input", input}, {"text", display_text(script, input)}});
  events.push_back({{"type", "MessageOut"},
                    {"at", at},
                    {"turn", turn},
                    {"llm_calls", calls_to_json(log ? log->calls() : std::vector<CallLogBackend::Call>{})},
                    {"state", engine_state_to_json(next)}});
  if (is_completed(next)) events.push_back({{"type", "Completed"}, {"at", at}});

  std::lock_guard data(session->data_mutex);
  store_->append({{"session_id", session_id}, {"events", events}});
  session->events.insert(session->events.end(), events.begin(), events.end());
  session->state = std::move(next);
  return turn;
}

void SessionService::submit_survey(const SurveyResponse& response) {
  auto session = find_session(response.session_id);
  auto it = options_.instruments.find(response.instrument_id);
  if (it == options_.instruments.end()) throw UnknownInstrument("unknown instrument \"" + response.instrument_id + "\"");
  const auto& instrument = it->second;
  if (response.answers.empty()) throw BadRequest("survey response has no answers");

  std::set<std::string> seen;
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& answer : response.answers) {
    bool known = std::any_of(instrument.items.begin(), instrument.items.end(),
                             [&](const auto& item) { return item.id == answer.item_id; });
    if (!known) throw BadRequest("item \"" + answer.item_id + "\" is not part of " + instrument.id);
    if (!seen.insert(answer.item_id).second) throw BadRequest("item \"" + answer.item_id + "\" answered twice");
    if (answer.likert < 1 || answer.likert > 5)
      throw RangeError("likert value " + std::to_string(answer.likert) + " for " + answer.item_id +
                       " is outside 1..5");
    answers.push_back({{"item_id", answer.item_id}, {"likert", answer.likert}});
  }

  std::lock_guard data(session->data_mutex);
  if (session->surveys.count(instrument.id))
    throw Conflict("session " + response.session_id + " already answered " + instrument.id);
  nlohmann::json event{{"type", "SurveySubmitted"},
                       {"at", response.submitted_at ? response.submitted_at : now()},
                       {"instrument_id", instrument.id},
                       {"answers", answers}};
  store_->append({{"session_id", response.session_id}, {"events", nlohmann::json::array({event})}});
  session->events.push_back(event);
  session->surveys.insert(instrument.id);
}

SessionView SessionService::get_session(const std::string& session_id) const {
  auto session = find_session(session_id);
  std::lock_guard data(session->data_mutex);
  SessionView view;
  view.session_id = session->id;
  view.condition = session->condition;
  view.topic_id = session->topic_id;
  view.backend = session->backend;
  view.created_at = session->created_at;
  view.completed = is_completed(session->state);
  view.options = suggested_options(library_.topic(session->topic_id), session->state);
  view.transcript = transcript_from_events(session->id, session->events);
  view.surveys.assign(session->surveys.begin(), session->surveys.end());
  return view;
}

std::vector<std::string> SessionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

EngineState SessionService::engine_state(const std::string& session_id) const {
  auto session = find_session(session_id);
  std::lock_guard data(session->data_mutex);
  return session->state;
}

std::vector<nlohmann::json> SessionService::session_events(const std::string& session_id) const {
  auto session = find_session(session_id);
  std::lock_guard data(session->data_mutex);
  return session->events;
}

std::vector<Transcript> SessionService::export_transcripts(std::optional<Condition> condition,
                                                           std::optional<std::string> topic_id) const {
  std::vector<std::shared_ptr<Session>> sessions;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [_, s] : sessions_) sessions.push_back(s);
  }
  std::vector<Transcript> out;
  for (const auto& s : sessions) {
    if (condition && s->condition != *condition) continue;
    if (topic_id && s->topic_id != *topic_id) continue;
    std::lock_guard data(s->data_mutex);
    out.push_back(transcript_from_events(s->id, s->events));
  }
  return out;
}

EngineState SessionService::replay_events(const std::vector<nlohmann::json>& events, const DialogueScript& script,
                                          const LabelMap* label_map, const EngineConfig& config) {
  std::optional<EngineState> state;
  std::optional<UserInput> pending;
  for (const auto& event : events) {
    const auto type = event.at("type").get<std::string>();
    if (type == "Created") {
      auto condition = parse_condition(event.at("condition").get<std::string>());
      if (!condition) throw SchemaError("unknown condition in event log");
      SequenceBackend seq(calls_from_json(event.at("llm_calls")));
      auto [s, _] = engine_start(*condition, EngineDeps{script, &seq, label_map, config});
      if (!seq.exhausted()) throw ReplayMiss("logged backend calls were not all consumed");
      state = std::move(s);
    } else if (type == "MessageIn") {
      pending = event.at("input").get<UserInput>();
    } else if (type == "MessageOut") {
      if (!state || !pending) throw ReplayMiss("message out of order in event log");
      SequenceBackend seq(calls_from_json(event.at("llm_calls")));
      auto [s, _] = engine_step(*state, *pending, EngineDeps{script, &seq, label_map, config});
      if (!seq.exhausted()) throw ReplayMiss("logged backend calls were not all consumed");
      state = std::move(s);
      pending.reset();
    }
  }
  if (!state) throw ReplayMiss("event log has no Created event");
  return *state;
}

Transcript SessionService::transcript_from_events(const std::string& session_id,
                                                  const std::vector<nlohmann::json>& events) {
  Transcript transcript;
  transcript.session_id = session_id;
  std::optional<std::size_t> last_user;
  for (const auto& event : events) {
    const auto type = event.at("type").get<std::string>();
    const auto at = event.at("at").get<std::int64_t>();
    if (type == "Created") {
      transcript.condition = parse_condition(event.at("condition").get<std::string>()).value_or(Condition::RuleBased);
      transcript.topic_id = event.at("topic_id").get<std::string>();
      append_bot_turns(transcript, event.at("turn").get<BotTurn>(), at);
    } else if (type == "MessageIn") {
      auto input = event.at("input").get<UserInput>();
      TranscriptTurn t;
      t.role = Speaker::User;
      t.text = event.at("text").get<std::string>();
      t.timestamp = at;
      t.option_id = input.option_id;
      last_user = transcript.turns.size();
      transcript.turns.push_back(std::move(t));
    } else if (type == "MessageOut") {
      auto turn = event.at("turn").get<BotTurn>();
      if (last_user && !transcript.turns[*last_user].option_id)
        transcript.turns[*last_user].option_id = turn.resolved_option;
      append_bot_turns(transcript, turn, at);
    } else if (type == "Completed") {
      transcript.completed_flag = true;
    }
  }
  return transcript;
}

void SessionService::load() {
  std::map<std::string, std::shared_ptr<Session>> loaded;
  for (const auto& group : store_->groups()) {
    const auto id = group.at("session_id").get<std::string>();
    auto& session = loaded[id];
    if (!session) {
      session = std::make_shared<Session>();
      session->id = id;
    }
    for (const auto& event : group.at("events")) session->events.push_back(event);
  }

  for (auto& [id, session] : loaded) {
    const auto& events = session->events;
    auto created = std::find_if(events.begin(), events.end(), [](const auto& e) { return e.at("type") == "Created"; });
    if (created == events.end()) throw SchemaError("session " + id + " has no Created event");
    session->condition = parse_condition(created->at("condition").get<std::string>()).value_or(Condition::RuleBased);
    session->topic_id = created->at("topic_id").get<std::string>();
    session->backend = created->at("backend").get<std::string>();
    session->created_at = created->at("at").get<std::int64_t>();
    for (const auto& e : events)
      if (e.at("type") == "SurveySubmitted") session->surveys.insert(e.at("instrument_id").get<std::string>());

    const auto& script = library_.topic(session->topic_id);
    try {
      session->state = replay_events(events, script, options_.label_map.get(), options_.engine);
    } catch (const std::exception& e) {
      // Fall back to the latest stored snapshot.
      std::cerr << "warning: replay of session " << id << " failed (" << e.what() << "), using snapshot\n";
      for (auto it = events.rbegin(); it != events.rend(); ++it) {
        if (it->contains("state")) {
          session->state = engine_state_from_json(session->condition, it->at("state"));
          break;
        }
      }
    }
  }
  std::unique_lock lock(sessions_mutex_);
  sessions_ = std::move(loaded);
}

nlohmann::json session_view_to_json(const SessionView& view) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : view.transcript.turns) {
    nlohmann::json turn{{"role", t.role == Speaker::Bot ? "bot" : "user"}, {"text", t.text}, {"timestamp", t.timestamp}};
    if (t.matched_node_id) turn["matched_node_id"] = *t.matched_node_id;
    if (t.strategy) turn["strategy"] = *t.strategy;
    if (t.option_id) turn["option_id"] = *t.option_id;
    turns.push_back(std::move(turn));
  }
  return {{"session_id", view.session_id},
          {"condition", to_string(view.condition)},
          {"topic_id", view.topic_id},
          {"backend", view.backend},
          {"created_at", view.created_at},
          {"completed", view.completed},
          {"options", view.options},
          {"turns", turns},
          {"surveys", view.surveys}};
}

}  // namespace scriptalign
