#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/conversation.hpp"
#include "scriptalign/metrics.hpp"
#include "scriptalign/transcript.hpp"

namespace scriptalign {

// --- surveys ----------------------------------------------------------------

struct SurveyItem {
  std::string id;
  std::string text;
};

struct SurveyInstrument {
  std::string id;
  std::string title;
  std::vector<SurveyItem> items;
};

/// Reads every *.json instrument in `dir`, keyed by id.
std::map<std::string, SurveyInstrument> load_survey_instruments(const std::filesystem::path& dir);
nlohmann::json instrument_to_json(const SurveyInstrument& instrument);

struct SurveyAnswer {
  std::string item_id;
  int likert = 0;
};

struct SurveyResponse {
  std::string session_id;
  std::string instrument_id;
  std::vector<SurveyAnswer> answers;
  std::int64_t submitted_at = 0;
};

// --- event log --------------------------------------------------------------

/// Append-only JSON-lines log. Each line is one commit: the group of events a
/// single operation produced, written with one write() and fsync'd. A torn
/// last line (crash mid-write) is cut off when the store is opened.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path file);
  ~EventStore();
  EventStore(const EventStore&) = delete;
  EventStore& operator=(const EventStore&) = delete;

  /// `group` must hold "session_id" and "events". Throws IoError.
  void append(const nlohmann::json& group);
  /// Committed groups in log order.
  std::vector<nlohmann::json> groups() const;
  /// Bytes discarded at open because the last line was incomplete.
  std::size_t recovered_bytes() const { return recovered_bytes_; }
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  int fd_ = -1;
  std::size_t recovered_bytes_ = 0;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> groups_;
};

// --- service ----------------------------------------------------------------

struct ServiceOptions {
  std::filesystem::path data_dir;
  EngineConfig engine;
  std::shared_ptr<const LabelMap> label_map;
  std::map<std::string, SurveyInstrument> instruments;
  /// Milliseconds since the epoch; defaults to the system clock.
  std::function<std::int64_t()> clock;
  /// Defaults to 128 random bits, base64url encoded.
  std::function<std::string()> new_session_id;
};

struct SessionView {
  std::string session_id;
  Condition condition = Condition::RuleBased;
  std::string topic_id;
  std::string backend;
  std::int64_t created_at = 0;
  bool completed = false;
  std::vector<TurnOption> options;
  Transcript transcript;
  std::vector<std::string> surveys;
};

nlohmann::json session_view_to_json(const SessionView& view);

struct CreatedSession {
  std::string session_id;
  BotTurn turn;
};

/// Backend name recorded for rule-based sessions, which need none.
inline constexpr std::string_view kNoBackend = "none";

/// Sessions of every condition over one event log. Engine state is rebuilt
/// by replaying each session's events, with logged backend output standing in
/// for the backend. Steps on one session are exclusive: a concurrent step
/// gets Busy instead of waiting.
class SessionService {
 public:
  SessionService(ScriptLibrary library, ServiceOptions options);
  ~SessionService();

  void register_backend(const std::string& name, std::shared_ptr<Backend> backend);
  std::vector<std::string> backend_names() const;

  /// Throws UnknownTopic, UnknownBackend, plus backend errors.
  CreatedSession create_session(Condition condition, const std::string& topic_id, const std::string& backend_name);
  /// Throws NotFound, Busy, SessionComplete, InvalidOption, plus backend errors.
  BotTurn post_message(const std::string& session_id, const UserInput& input);
  /// Throws NotFound, UnknownInstrument, Conflict, RangeError, BadRequest.
  void submit_survey(const SurveyResponse& response);

  SessionView get_session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  EngineState engine_state(const std::string& session_id) const;
  /// Events of one session in log order.
  std::vector<nlohmann::json> session_events(const std::string& session_id) const;

  std::vector<Transcript> export_transcripts(std::optional<Condition> condition = std::nullopt,
                                             std::optional<std::string> topic_id = std::nullopt) const;

  const ScriptLibrary& library() const { return library_; }
  const std::map<std::string, SurveyInstrument>& instruments() const { return options_.instruments; }
  const EngineConfig& engine_config() const { return options_.engine; }

  /// Rebuilds a session's engine state from its events alone. Throws ReplayMiss
  /// when the log does not match what the engines ask for.
  static EngineState replay_events(const std::vector<nlohmann::json>& events, const DialogueScript& script,
                                   const LabelMap* label_map, const EngineConfig& config);
  static Transcript transcript_from_events(const std::string& session_id, const std::vector<nlohmann::json>& events);

 private:
  struct Session;

  std::shared_ptr<Session> find_session(const std::string& session_id) const;
  std::shared_ptr<Backend> backend_for(const std::string& name) const;
  EngineDeps deps_for(const DialogueScript& script, Backend* backend) const;
  std::int64_t now() const;
  void load();

  ScriptLibrary library_;
  ServiceOptions options_;
  std::unique_ptr<EventStore> store_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  mutable std::mutex backends_mutex_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
};

/// 128 random bits, base64url without padding.
std::string random_session_id();

}  // namespace scriptalign
