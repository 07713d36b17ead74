#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/errors.hpp"

namespace scriptalign {

inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kClassificationTemperature = 0.0;
inline constexpr int kDefaultMaxTokens = 512;

/// Literal the prompts ask a generative backend to end a finished topic with.
inline constexpr std::string_view kClosingMarker = "[TOPIC_COMPLETE]";

/// FreeformMock's only answer.
inline constexpr std::string_view kFreeformSentence = "That sounds difficult. Tell me more about how you feel.";

enum class Role { System, Assistant, User };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::User;
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
  std::string system_prompt;
  std::vector<ChatMessage> messages;
  double temperature = kGenerationTemperature;
  int max_tokens = kDefaultMaxTokens;
  /// Which engine step issued the request, e.g. "sag.step" or "ssag.predict".
  std::string tag;

  bool operator==(const CompletionRequest&) const = default;
};

struct Usage {
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

struct Completion {
  std::string text;
  Usage usage;
};

/// Merges consecutive messages with the same role (joined by a blank line).
std::vector<ChatMessage> normalize_messages(const std::vector<ChatMessage>& messages);

/// Throws BadRequest when the message list is empty.
void check_request(const CompletionRequest& request);

nlohmann::json request_to_json(const CompletionRequest& request);
CompletionRequest request_from_json(const nlohmann::json& j);

/// Canonical form (normalized messages, sorted keys) the request hash covers.
std::string canonical_request(const CompletionRequest& request);
/// Hex SHA-256 of canonical_request().
std::string request_hash(const CompletionRequest& request);

/// Text-generation contract shared by the live client and the mocks.
/// Implementations must allow concurrent complete() calls.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws BudgetExceeded when max_tokens <= 0, plus backend-specific errors.
  Completion complete(const CompletionRequest& request);
  virtual std::string name() const = 0;

 protected:
  virtual Completion do_complete(const CompletionRequest& request) = 0;
};

// --- machine-readable prompt blocks ----------------------------------------
//
// Engines embed JSON payloads in their prompts between these delimiters so
// that mocks (and tests) can read the engine's intent without parsing prose.

inline constexpr std::string_view kScriptContextBlock = "SCRIPT_CONTEXT";
inline constexpr std::string_view kExpertContentBlock = "EXPERT_CONTENT";
inline constexpr std::string_view kStrategyContextBlock = "STRATEGY_CONTEXT";

std::string render_block(std::string_view name, const nlohmann::json& payload);
std::optional<nlohmann::json> extract_block(std::string_view prompt, std::string_view name);

/// Follows the script: reads the SCRIPT_CONTEXT block and answers with the
/// bot chain starting at its "next" node; echoes EXPERT_CONTENT verbatim;
/// answers STRATEGY_CONTEXT with a fixed alternating policy.
class ScriptFaithfulMock : public Backend {
 public:
  std::string name() const override { return "scriptfaithful"; }
  /// Returned when a prompt carries no block the mock understands.
  static constexpr std::string_view kGenericReflection = "It sounds like this really matters to you.";

 protected:
  Completion do_complete(const CompletionRequest& request) override;
};

/// Ignores everything and returns kFreeformSentence.
class FreeformMock : public Backend {
 public:
  std::string name() const override { return "freeform"; }

 protected:
  Completion do_complete(const CompletionRequest& request) override;
};

struct RecordingEntry {
  std::string request_hash;
  CompletionRequest request;
  Completion response;
};

inline constexpr std::string_view kRecordingFormat = "scriptalign-recording";

/// Answers from a recording keyed by request_hash(). Throws ReplayMiss for
/// unrecorded requests and CollisionError when the stored request under the
/// same hash differs from the incoming one.
class ReplayMock : public Backend {
 public:
  explicit ReplayMock(std::vector<RecordingEntry> entries);
  /// Reads a JSON-lines recording. Throws IoError.
  static std::unique_ptr<ReplayMock> from_file(const std::filesystem::path& path);

  std::string name() const override { return "replay"; }
  std::size_t size() const { return entries_.size(); }

 protected:
  Completion do_complete(const CompletionRequest& request) override;

 private:
  std::map<std::string, RecordingEntry> entries_;
};

/// Wraps another backend and persists every (request, response) pair as a
/// replayable JSON-lines recording. The header line is written on construction.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path sink);

  std::string name() const override { return inner_->name(); }
  std::size_t recorded() const;

 protected:
  Completion do_complete(const CompletionRequest& request) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path sink_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> seen_;  // hash -> canonical request
};

struct LiveHttpConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string model;
  std::chrono::milliseconds timeout{60'000};
  int retries = 3;
  std::chrono::milliseconds initial_backoff{500};

  /// From LLM_API_BASE, LLM_API_KEY and LLM_MODEL; nullopt if the base URL is unset.
  static std::optional<LiveHttpConfig> from_env();
};

/// Chat-completions client. Retries transport failures and 5xx responses
/// with exponential backoff; other failures surface immediately.
class LiveHttpBackend : public Backend {
 public:
  explicit LiveHttpBackend(LiveHttpConfig config);

  std::string name() const override { return "live"; }
  const LiveHttpConfig& config() const { return config_; }

  /// Replaces std::this_thread::sleep_for between retries (tests).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

 protected:
  Completion do_complete(const CompletionRequest& request) override;

 private:
  LiveHttpConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
};

/// Records every call passing through it; the session service uses this to
/// store backend output in the event log so engine state can be replayed.
class CallLogBackend : public Backend {
 public:
  struct Call {
    std::string tag;
    std::string text;
  };

  explicit CallLogBackend(Backend& inner) : inner_(inner) {}
  std::string name() const override { return inner_.name(); }
  const std::vector<Call>& calls() const { return calls_; }

 protected:
  Completion do_complete(const CompletionRequest& request) override;

 private:
  Backend& inner_;
  std::vector<Call> calls_;
};

/// Returns logged responses in order, checking each request's tag.
/// Throws ReplayMiss when the log is exhausted or out of step.
class SequenceBackend : public Backend {
 public:
  explicit SequenceBackend(std::vector<CallLogBackend::Call> calls) : calls_(std::move(calls)) {}
  std::string name() const override { return "sequence"; }
  bool exhausted() const { return next_ == calls_.size(); }

 protected:
  Completion do_complete(const CompletionRequest& request) override;

 private:
  std::vector<CallLogBackend::Call> calls_;
  std::size_t next_ = 0;
};

}  // namespace scriptalign
