#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scriptalign/script_model.hpp"

namespace scriptalign {

enum class Condition { RuleBased, PureLlm, SagPrompt, Ssag };

/// Wire names: rule_based, pure_llm, sag_prompt, ssag.
std::string_view to_string(Condition condition);
/// Accepts the wire names and the CamelCase enumerator names.
std::optional<Condition> parse_condition(std::string_view text);
inline constexpr Condition kAllConditions[] = {Condition::RuleBased, Condition::PureLlm, Condition::SagPrompt,
                                               Condition::Ssag};

struct TranscriptTurn {
  Speaker role = Speaker::Bot;
  std::string text;
  std::int64_t timestamp = 0;  // milliseconds since the epoch
  std::optional<std::string> matched_node_id;
  std::optional<std::string> strategy;
  /// Branch the engine read from this user turn.
  std::optional<std::string> option_id;

  bool operator==(const TranscriptTurn&) const = default;
};

struct Transcript {
  std::string session_id;
  Condition condition = Condition::RuleBased;
  std::string topic_id;
  std::vector<TranscriptTurn> turns;
  bool completed_flag = false;

  bool operator==(const Transcript&) const = default;
};

/// JSON-lines: a header object, then one object per turn.
void write_transcript(std::ostream& out, const Transcript& transcript);
/// Throws SchemaError on malformed input.
Transcript read_transcript(std::istream& in);

void save_transcript(const std::filesystem::path& path, const Transcript& transcript);
Transcript load_transcript(const std::filesystem::path& path);
/// Every *.jsonl file in the directory, ordered by file name.
std::vector<Transcript> load_transcript_dir(const std::filesystem::path& dir);

}  // namespace scriptalign
