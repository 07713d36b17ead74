#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scriptalign/errors.hpp"

namespace scriptalign {

enum class NodeKind { TherapeuticQuestion, Reflection, Information, Advice, UserOption, Terminal };
enum class Speaker { Bot, User };
enum class Framework { MI, CBT };

std::string_view to_string(NodeKind kind);
std::string_view to_string(Speaker speaker);
std::string_view to_string(Framework framework);
std::optional<NodeKind> parse_node_kind(std::string_view text);
std::optional<Speaker> parse_speaker(std::string_view text);
std::optional<Framework> parse_framework(std::string_view text);

struct ScriptNode {
  std::string id;
  NodeKind kind = NodeKind::TherapeuticQuestion;
  Speaker speaker = Speaker::Bot;
  std::string text;
  std::vector<std::string> children;

  bool operator==(const ScriptNode&) const = default;
};

/// One expert-authored topic. Nodes keep document order so that a
/// re-serialized script diffs cleanly against its source. A script built by
/// `parse_script_document` may still violate structural invariants (that is
/// what the validator reports on); `parse_script` only returns valid ones.
class DialogueScript {
 public:
  DialogueScript() = default;
  DialogueScript(std::string topic_id, std::string title, Framework framework, std::string root_id,
                 std::vector<ScriptNode> nodes);

  const std::string& topic_id() const { return topic_id_; }
  const std::string& title() const { return title_; }
  Framework framework() const { return framework_; }
  const std::string& root_id() const { return root_id_; }
  const std::vector<ScriptNode>& nodes() const { return nodes_; }

  /// First node with this id, or nullptr.
  const ScriptNode* find(std::string_view id) const;
  /// Like find() but throws StructureError for unknown ids.
  const ScriptNode& node(std::string_view id) const;
  const ScriptNode& root() const { return node(root_id_); }

  bool is_branch_point(const ScriptNode& node) const;

  bool operator==(const DialogueScript& other) const;

 private:
  std::string topic_id_;
  std::string title_;
  Framework framework_ = Framework::MI;
  std::string root_id_;
  std::vector<ScriptNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ValidationIssue {
  std::string topic_id;
  std::optional<std::string> node_id;
  std::string code;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;
};

/// Immutable after load; topics are keyed and iterated by topic id.
class ScriptLibrary {
 public:
  ScriptLibrary() = default;
  ScriptLibrary(std::string version, std::vector<DialogueScript> scripts);

  const std::string& version() const { return version_; }
  const std::map<std::string, DialogueScript>& scripts() const { return scripts_; }
  bool empty() const { return scripts_.empty(); }
  std::size_t size() const { return scripts_.size(); }

  const DialogueScript* find(std::string_view topic_id) const;
  /// Throws UnknownTopic.
  const DialogueScript& topic(std::string_view topic_id) const;

 private:
  std::string version_;
  std::map<std::string, DialogueScript> scripts_;
};

// Issue codes reported by the structural checker.
namespace issue {
inline constexpr std::string_view kDuplicateId = "DUPLICATE_ID";
inline constexpr std::string_view kDuplicateTopic = "DUPLICATE_TOPIC";
inline constexpr std::string_view kMissingRoot = "MISSING_ROOT";
inline constexpr std::string_view kUnknownChild = "UNKNOWN_CHILD";
inline constexpr std::string_view kDuplicateChild = "DUPLICATE_CHILD";
inline constexpr std::string_view kCycle = "CYCLE";
inline constexpr std::string_view kMultipleParents = "MULTIPLE_PARENTS";
inline constexpr std::string_view kOrphan = "ORPHAN";
inline constexpr std::string_view kWellFormedBranch = "WELL_FORMED_BRANCH";
inline constexpr std::string_view kSpeakerMismatch = "SPEAKER_MISMATCH";
inline constexpr std::string_view kTerminalHasChildren = "TERMINAL_HAS_CHILDREN";
inline constexpr std::string_view kEmptyText = "EMPTY_TEXT";
inline constexpr std::string_view kMissingTerminal = "MISSING_TERMINAL";
inline constexpr std::string_view kNoQuestion = "NO_QUESTION";
inline constexpr std::string_view kParseError = "PARSE_ERROR";
}  // namespace issue

/// Parses the JSON document without structural checks. Duplicate node ids are
/// kept (as repeated entries) so the validator can report them.
/// Throws SyntaxError or SchemaError.
DialogueScript parse_script_document(std::string_view source);

/// parse_script_document + check_script; throws StructureError on the first
/// structural issue.
DialogueScript parse_script(std::string_view source);

/// All invariant violations of one script. Empty means valid.
std::vector<ValidationIssue> check_script(const DialogueScript& script);

ValidationReport validate_library(const ScriptLibrary& library);

std::string serialize_script(const DialogueScript& script, int indent = 2);

struct LibraryLoad {
  ScriptLibrary library;
  /// Problems found while loading (unreadable/unparseable files, duplicate topics).
  std::vector<ValidationIssue> load_issues;
};

/// Reads `library.json` and every listed topic without rejecting invalid
/// scripts. Throws IoError when the manifest is missing or unreadable.
LibraryLoad load_library_lenient(const std::filesystem::path& dir);

/// Loads and requires every script to be valid; throws on the first problem.
ScriptLibrary load_library(const std::filesystem::path& dir);

struct BfsRow {
  int depth = 0;
  std::string node_id;
  NodeKind kind = NodeKind::TherapeuticQuestion;
  std::string text;

  bool operator==(const BfsRow&) const = default;
};

std::vector<BfsRow> bfs_serialize(const DialogueScript& script,
                                  std::optional<int> max_depth = std::nullopt);

using NodePath = std::vector<std::string>;

/// Every root-to-leaf path, in depth-first child order.
std::vector<NodePath> enumerate_paths(const DialogueScript& script);

/// Ids of TherapeuticQuestion nodes among `path`, in path order.
std::vector<std::string> questions_on(const DialogueScript& script, const NodePath& path);

}  // namespace scriptalign
