#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scriptalign/conversation.hpp"
#include "scriptalign/transcript.hpp"

namespace scriptalign {

enum class ProfileKind { Compliant, Digressive, Adversarial };

struct SimProfile {
  std::string name;
  ProfileKind kind = ProfileKind::Compliant;
  /// Digressive users go off topic on every k-th message.
  int digress_every = 3;
  int max_turns = 40;
  std::vector<std::string> free_text_bank;
  std::vector<std::string> off_topic_bank;
};

/// compliant, digressive or adversarial. Throws BadRequest for other names.
SimProfile make_profile(std::string_view name, int digress_every = 3, int max_turns = 40);

/// Synthetic participant. At a choice it picks an option (scripted choices
/// first, then uniformly at random); otherwise it answers from its banks.
class SimulatedUser {
 public:
  SimulatedUser(SimProfile profile, std::uint64_t seed, std::vector<std::string> choices = {});

  /// `click` sends option ids; otherwise the option label is typed as text.
  UserInput next(const BotTurn& last, bool click);

  int messages_sent() const { return sent_; }

 private:
  std::string pick(const std::vector<std::string>& bank);

  SimProfile profile_;
  std::mt19937_64 rng_;
  std::vector<std::string> choices_;
  std::size_t next_choice_ = 0;
  int sent_ = 0;
};

/// Adds one transcript turn per bubble.
void append_bot_turns(Transcript& transcript, const BotTurn& turn, std::int64_t at);

struct SimulationSpec {
  Condition condition = Condition::RuleBased;
  std::string session_id;
  SimProfile profile;
  std::uint64_t seed = 0;
  /// Options to take at successive choices before falling back to random ones.
  std::vector<std::string> choices;
};

/// Runs one session to completion or profile.max_turns user messages.
/// Timestamps are logical (one second per message) so output is reproducible.
Transcript simulate_session(const SimulationSpec& spec, const EngineDeps& deps);

/// Root-to-leaf replay of `path` with compliant option clicks (rule-based) or
/// option-label text (LLM conditions).
Transcript replay_path(Condition condition, const NodePath& path, const EngineDeps& deps,
                       const std::string& session_id);

/// Options taken along a root-to-leaf path, in order.
std::vector<std::string> choices_on(const DialogueScript& script, const NodePath& path);

}  // namespace scriptalign
