#pragma once

#include <string>
#include <vector>

#include "scriptalign/conversation.hpp"
#include "scriptalign/rule_engine.hpp"
#include "scriptalign/simulation.hpp"
#include "scriptalign/transcript.hpp"

namespace testing {

struct PathTranscript {
  scriptalign::Transcript transcript;
  std::size_t questions = 0;
};

/// Rule-based compliant replay of every root-to-leaf path in the library.
inline std::vector<PathTranscript> replay_all_paths(const scriptalign::ScriptLibrary& library,
                                                    const scriptalign::EngineConfig& config) {
  using namespace scriptalign;
  std::vector<PathTranscript> out;
  for (const auto& [topic, script] : library.scripts()) {
    EngineDeps deps{script, nullptr, nullptr, config};
    int index = 0;
    for (const auto& path : enumerate_paths(script)) {
      PathTranscript item;
      item.transcript = replay_path(Condition::RuleBased, path, deps, topic + "-" + std::to_string(index++));
      for (const auto& id : path) item.questions += script.node(id).kind == NodeKind::TherapeuticQuestion;
      out.push_back(std::move(item));
    }
  }
  return out;
}

/// Rewrites the first `missing` question turns so they match no script text.
inline void drop_questions(scriptalign::Transcript& transcript, const scriptalign::DialogueScript& script,
                           std::size_t missing) {
  using namespace scriptalign;
  for (auto& turn : transcript.turns) {
    if (missing == 0) break;
    if (turn.role != Speaker::Bot) continue;
    bool question = false;
    for (const auto& node : script.nodes())
      question = question || (node.kind == NodeKind::TherapeuticQuestion && node.text == turn.text);
    if (!question) continue;
    turn.text = "zzz unrelated filler";
    turn.matched_node_id.reset();
    --missing;
  }
}

/// Marks the transcript as not concluded and removes its closing turn.
inline void make_incomplete(scriptalign::Transcript& transcript) {
  transcript.completed_flag = false;
  if (!transcript.turns.empty()) transcript.turns.pop_back();
}

}  // namespace testing
