#include "scriptalign/transcript.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "scriptalign/errors.hpp"

namespace scriptalign {

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::RuleBased: return "rule_based";
    case Condition::PureLlm: return "pure_llm";
    case Condition::SagPrompt: return "sag_prompt";
    case Condition::Ssag: return "ssag";
  }
  return "rule_based";
}

std::optional<Condition> parse_condition(std::string_view text) {
  for (auto condition : kAllConditions)
    if (to_string(condition) == text) return condition;
  if (text == "RuleBased") return Condition::RuleBased;
  if (text == "PureLlm") return Condition::PureLlm;
  if (text == "SagPrompt") return Condition::SagPrompt;
  if (text == "Ssag") return Condition::Ssag;
  return std::nullopt;
}

namespace {

nlohmann::json optional_json(const std::optional<std::string>& value) {
  return value ? nlohmann::json(*value) : nlohmann::json();
}

std::optional<std::string> optional_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

void write_transcript(std::ostream& out, const Transcript& transcript) {
  nlohmann::json header{{"type", "transcript"},
                        {"session_id", transcript.session_id},
                        {"condition", to_string(transcript.condition)},
                        {"topic_id", transcript.topic_id},
                        {"completed", transcript.completed_flag},
                        {"turn_count", transcript.turns.size()}};
  out << header.dump() << "\n";
  for (const auto& turn : transcript.turns) {
    nlohmann::json annotations{{"matched_node_id", optional_json(turn.matched_node_id)},
                               {"strategy", optional_json(turn.strategy)},
                               {"option_id", optional_json(turn.option_id)}};
    nlohmann::json line{{"role", turn.role == Speaker::Bot ? "bot" : "user"},
                        {"text", turn.text},
                        {"timestamp", turn.timestamp},
                        {"annotations", annotations}};
    out << line.dump() << "\n";
  }
}

Transcript read_transcript(std::istream& in) {
  Transcript transcript;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError("transcript line is not a JSON object");
    try {
      if (!header_seen) {
        if (j.value("type", "") != "transcript") throw SchemaError("transcript header missing");
        transcript.session_id = j.at("session_id").get<std::string>();
        auto condition = parse_condition(j.at("condition").get<std::string>());
        if (!condition) throw SchemaError("unknown condition " + j.at("condition").dump());
        transcript.condition = *condition;
        transcript.topic_id = j.at("topic_id").get<std::string>();
        transcript.completed_flag = j.at("completed").get<bool>();
        header_seen = true;
        continue;
      }
      TranscriptTurn turn;
      const auto role = j.at("role").get<std::string>();
      if (role != "bot" && role != "user") throw SchemaError("unknown role " + role);
      turn.role = role == "bot" ? Speaker::Bot : Speaker::User;
      turn.text = j.at("text").get<std::string>();
      turn.timestamp = j.at("timestamp").get<std::int64_t>();
      if (auto it = j.find("annotations"); it != j.end()) {
        turn.matched_node_id = optional_field(*it, "matched_node_id");
        turn.strategy = optional_field(*it, "strategy");
        turn.option_id = optional_field(*it, "option_id");
      }
      transcript.turns.push_back(std::move(turn));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed transcript: ") + e.what());
    }
  }
  if (!header_seen) throw SchemaError("empty transcript");
  return transcript;
}

void save_transcript(const std::filesystem::path& path, const Transcript& transcript) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_transcript(out, transcript);
}

Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_transcript(in);
}

std::vector<Transcript> load_transcript_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Transcript> out;
  for (const auto& file : files) out.push_back(load_transcript(file));
  return out;
}

}  // namespace scriptalign
