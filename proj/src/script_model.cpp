#include "scriptalign/script_model.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace scriptalign {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::pair<NodeKind, std::string_view> kKindNames[] = {
    {NodeKind::TherapeuticQuestion, "TherapeuticQuestion"},
    {NodeKind::Reflection, "Reflection"},
    {NodeKind::Information, "Information"},
    {NodeKind::Advice, "Advice"},
    {NodeKind::UserOption, "UserOption"},
    {NodeKind::Terminal, "Terminal"},
};

ValidationIssue make_issue(const DialogueScript& script, std::optional<std::string> node_id,
                           std::string_view code, std::string message) {
  return ValidationIssue{script.topic_id(), std::move(node_id), std::string(code), std::move(message)};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

const ojson& require_field(const ojson& object, const char* field, const std::string& where) {
  auto it = object.find(field);
  if (it == object.end()) throw SchemaError(where + ": missing field \"" + field + "\"");
  return *it;
}

std::string require_string(const ojson& object, const char* field, const std::string& where) {
  const auto& value = require_field(object, field, where);
  if (!value.is_string()) throw SchemaError(where + ": field \"" + field + "\" must be a string");
  return value.get<std::string>();
}

void reject_unknown_fields(const ojson& object, std::initializer_list<std::string_view> known,
                           const std::string& where) {
  for (const auto& [key, _] : object.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw SchemaError(where + ": unknown field \"" + key + "\"");
  }
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::string_view to_string(Speaker speaker) { return speaker == Speaker::Bot ? "Bot" : "User"; }

std::string_view to_string(Framework framework) { return framework == Framework::MI ? "MI" : "CBT"; }

std::optional<NodeKind> parse_node_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  return std::nullopt;
}

std::optional<Speaker> parse_speaker(std::string_view text) {
  if (text == "Bot") return Speaker::Bot;
  if (text == "User") return Speaker::User;
  return std::nullopt;
}

std::optional<Framework> parse_framework(std::string_view text) {
  if (text == "MI") return Framework::MI;
  if (text == "CBT") return Framework::CBT;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

DialogueScript::DialogueScript(std::string topic_id, std::string title, Framework framework,
                               std::string root_id, std::vector<ScriptNode> nodes)
    : topic_id_(std::move(topic_id)),
      title_(std::move(title)),
      framework_(framework),
      root_id_(std::move(root_id)),
      nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

const ScriptNode* DialogueScript::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const ScriptNode& DialogueScript::node(std::string_view id) const {
  if (const auto* found = find(id)) return *found;
  throw StructureError("topic " + topic_id_ + ": unknown node " + std::string(id));
}

bool DialogueScript::is_branch_point(const ScriptNode& node) const {
  if (node.children.empty()) return false;
  return std::all_of(node.children.begin(), node.children.end(), [&](const std::string& child) {
    const auto* c = find(child);
    return c && c->kind == NodeKind::UserOption;
  });
}

bool DialogueScript::operator==(const DialogueScript& other) const {
  return topic_id_ == other.topic_id_ && title_ == other.title_ && framework_ == other.framework_ &&
         root_id_ == other.root_id_ && nodes_ == other.nodes_;
}

ScriptLibrary::ScriptLibrary(std::string version, std::vector<DialogueScript> scripts)
    : version_(std::move(version)) {
  for (auto& script : scripts) {
    auto id = script.topic_id();
    scripts_.emplace(std::move(id), std::move(script));
  }
}

const DialogueScript* ScriptLibrary::find(std::string_view topic_id) const {
  auto it = scripts_.find(std::string(topic_id));
  return it == scripts_.end() ? nullptr : &it->second;
}

const DialogueScript& ScriptLibrary::topic(std::string_view topic_id) const {
  if (const auto* script = find(topic_id)) return *script;
  throw UnknownTopic("unknown topic \"" + std::string(topic_id) + "\"");
}

// ---------------------------------------------------------------------------

DialogueScript parse_script_document(std::string_view source) {
  // nlohmann keeps only the last value of a repeated key; the callback
  // notices repeated node ids so they survive as repeated entries.
  std::vector<std::string> repeated_ids;
  std::string top_level_key;
  std::unordered_set<std::string> seen_ids;
  auto callback = [&](int depth, ojson::parse_event_t event, ojson& parsed) {
    if (event != ojson::parse_event_t::key) return true;
    if (depth == 1) {
      top_level_key = parsed.get<std::string>();
    } else if (depth == 2 && top_level_key == "nodes") {
      auto id = parsed.get<std::string>();
      if (!seen_ids.insert(id).second) repeated_ids.push_back(id);
    }
    return true;
  };

  ojson doc;
  try {
    doc = ojson::parse(source.begin(), source.end(), callback);
  } catch (const ojson::parse_error& e) {
    throw SyntaxError(std::string("malformed script document: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("script document must be a JSON object");

  reject_unknown_fields(doc, {"topic_id", "title", "framework", "root", "nodes"}, "script");
  auto topic_id = require_string(doc, "topic_id", "script");
  auto title = require_string(doc, "title", "script");
  auto framework_name = require_string(doc, "framework", "script");
  auto framework = parse_framework(framework_name);
  if (!framework) throw SchemaError("script: unknown framework \"" + framework_name + "\"");
  auto root = require_string(doc, "root", "script");

  const auto& nodes_json = require_field(doc, "nodes", "script");
  if (!nodes_json.is_object()) throw SchemaError("script: \"nodes\" must be an object");

  std::vector<ScriptNode> nodes;
  for (const auto& [id, body] : nodes_json.items()) {
    const std::string where = "node " + id;
    if (!body.is_object()) throw SchemaError(where + ": must be an object");
    reject_unknown_fields(body, {"kind", "speaker", "text", "children"}, where);
    ScriptNode node;
    node.id = id;
    auto kind_name = require_string(body, "kind", where);
    auto kind = parse_node_kind(kind_name);
    if (!kind) throw SchemaError(where + ": unknown kind \"" + kind_name + "\"");
    node.kind = *kind;
    auto speaker_name = require_string(body, "speaker", where);
    auto speaker = parse_speaker(speaker_name);
    if (!speaker) throw SchemaError(where + ": unknown speaker \"" + speaker_name + "\"");
    node.speaker = *speaker;
    node.text = require_string(body, "text", where);
    const auto& children = require_field(body, "children", where);
    if (!children.is_array()) throw SchemaError(where + ": \"children\" must be an array");
    for (const auto& child : children) {
      if (!child.is_string()) throw SchemaError(where + ": child ids must be strings");
      node.children.push_back(child.get<std::string>());
    }
    nodes.push_back(std::move(node));
  }
  for (const auto& id : repeated_ids) {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const ScriptNode& n) { return n.id == id; });
    nodes.push_back(*it);
  }

  return DialogueScript(std::move(topic_id), std::move(title), *framework, std::move(root),
                        std::move(nodes));
}

DialogueScript parse_script(std::string_view source) {
  auto script = parse_script_document(source);
  auto issues = check_script(script);
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw StructureError(first.code + ": " + first.message);
  }
  return script;
}

std::vector<ValidationIssue> check_script(const DialogueScript& script) {
  std::vector<ValidationIssue> issues;
  const auto& nodes = script.nodes();

  std::unordered_set<std::string> ids;
  for (const auto& node : nodes) {
    if (!ids.insert(node.id).second)
      issues.push_back(make_issue(script, node.id, issue::kDuplicateId, "duplicate node id " + node.id));
  }

  for (const auto& node : nodes) {
    const bool user_kind = node.kind == NodeKind::UserOption;
    if (user_kind != (node.speaker == Speaker::User)) {
      issues.push_back(make_issue(script, node.id, issue::kSpeakerMismatch,
                                  std::string(to_string(node.kind)) + " node " + node.id +
                                      " cannot have speaker " + std::string(to_string(node.speaker))));
    }
    if (node.kind != NodeKind::Terminal && node.text.empty())
      issues.push_back(make_issue(script, node.id, issue::kEmptyText, "node " + node.id + " has empty text"));
    if (node.kind == NodeKind::Terminal && !node.children.empty())
      issues.push_back(make_issue(script, node.id, issue::kTerminalHasChildren,
                                  "terminal node " + node.id + " has children"));
    std::unordered_set<std::string> child_set;
    for (const auto& child : node.children) {
      if (!child_set.insert(child).second)
        issues.push_back(make_issue(script, node.id, issue::kDuplicateChild,
                                    "node " + node.id + " lists child " + child + " twice"));
      if (!script.find(child))
        issues.push_back(make_issue(script, node.id, issue::kUnknownChild,
                                    "node " + node.id + " lists unknown child " + child));
    }
    if (node.children.size() > 1 && (node.speaker != Speaker::Bot || !script.is_branch_point(node))) {
      issues.push_back(make_issue(script, node.id, issue::kWellFormedBranch,
                                  "node " + node.id + " branches without UserOption children"));
    }
  }

  bool has_question = std::any_of(nodes.begin(), nodes.end(), [](const ScriptNode& n) {
    return n.kind == NodeKind::TherapeuticQuestion;
  });
  if (!has_question)
    issues.push_back(make_issue(script, std::nullopt, issue::kNoQuestion, "script has no TherapeuticQuestion node"));

  if (!script.find(script.root_id())) {
    issues.push_back(make_issue(script, std::nullopt, issue::kMissingRoot,
                                "root node \"" + script.root_id() + "\" is not defined"));
    return issues;
  }

  // Depth-first walk with colors: an edge back onto the stack is a cycle, an
  // edge into an already finished node is a re-join (second parent).
  enum class Color { White, Gray, Black };
  std::unordered_map<std::string, Color> color;
  for (const auto& node : nodes) color[node.id] = Color::White;

  std::function<void(const ScriptNode&)> visit = [&](const ScriptNode& node) {
    color[node.id] = Color::Gray;
    if (node.children.empty() && node.kind != NodeKind::Terminal) {
      issues.push_back(make_issue(script, node.id, issue::kMissingTerminal,
                                  "path ends at non-terminal node " + node.id));
    }
    std::unordered_set<std::string> done_here;
    for (const auto& child_id : node.children) {
      const auto* child = script.find(child_id);
      if (!child || !done_here.insert(child_id).second) continue;
      switch (color[child_id]) {
        case Color::White: visit(*child); break;
        case Color::Gray:
          issues.push_back(make_issue(script, child_id, issue::kCycle, "cycle via " + child_id));
          break;
        case Color::Black:
          issues.push_back(make_issue(script, child_id, issue::kMultipleParents,
                                      "node " + child_id + " has more than one parent"));
          break;
      }
    }
    color[node.id] = Color::Black;
  };
  visit(script.root());

  std::vector<const ScriptNode*> unreached;
  std::unordered_set<std::string> unreached_ids;
  for (const auto& node : nodes) {
    if (color[node.id] == Color::White && unreached_ids.insert(node.id).second) unreached.push_back(&node);
  }
  if (!unreached.empty()) {
    // Report the top of each detached subtree rather than every node in it.
    std::unordered_set<std::string> has_unreached_parent;
    for (const auto* node : unreached)
      for (const auto& child : node->children) has_unreached_parent.insert(child);
    bool reported = false;
    for (const auto* node : unreached) {
      if (has_unreached_parent.count(node->id)) continue;
      issues.push_back(make_issue(script, node->id, issue::kOrphan, "node " + node->id + " is unreachable from root"));
      reported = true;
    }
    if (!reported) {
      issues.push_back(make_issue(script, unreached.front()->id, issue::kOrphan,
                                  "node " + unreached.front()->id + " is unreachable from root"));
    }
  }
  return issues;
}

ValidationReport validate_library(const ScriptLibrary& library) {
  ValidationReport report;
  for (const auto& [_, script] : library.scripts()) {
    auto issues = check_script(script);
    report.issues.insert(report.issues.end(), issues.begin(), issues.end());
  }
  report.ok = report.issues.empty();
  return report;
}

std::string serialize_script(const DialogueScript& script, int indent) {
  ojson doc;
  doc["topic_id"] = script.topic_id();
  doc["title"] = script.title();
  doc["framework"] = std::string(to_string(script.framework()));
  doc["root"] = script.root_id();
  doc["nodes"] = ojson::object();
  for (const auto& node : script.nodes()) {
    ojson body;
    body["kind"] = std::string(to_string(node.kind));
    body["speaker"] = std::string(to_string(node.speaker));
    body["text"] = node.text;
    body["children"] = node.children;
    doc["nodes"][node.id] = std::move(body);
  }
  return doc.dump(indent) + "\n";
}

LibraryLoad load_library_lenient(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "library.json";
  if (!std::filesystem::exists(manifest_path)) throw IoError("missing manifest " + manifest_path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("unreadable manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("version") || !manifest.contains("topics") ||
      !manifest["version"].is_string() || !manifest["topics"].is_array()) {
    throw IoError("manifest " + manifest_path.string() + " must have string \"version\" and array \"topics\"");
  }

  LibraryLoad result;
  std::vector<DialogueScript> scripts;
  std::set<std::string> topic_ids;
  for (const auto& entry : manifest["topics"]) {
    if (!entry.is_string()) throw IoError("manifest topics must be relative paths");
    const auto rel = entry.get<std::string>();
    try {
      auto script = parse_script_document(read_file(dir / rel));
      if (!topic_ids.insert(script.topic_id()).second) {
        result.load_issues.push_back({script.topic_id(), std::nullopt, std::string(issue::kDuplicateTopic),
                                      "topic " + script.topic_id() + " defined more than once (" + rel + ")"});
        continue;
      }
      scripts.push_back(std::move(script));
    } catch (const Error& e) {
      result.load_issues.push_back({rel, std::nullopt, std::string(issue::kParseError), e.what()});
    }
  }
  result.library = ScriptLibrary(manifest["version"].get<std::string>(), std::move(scripts));
  return result;
}

ScriptLibrary load_library(const std::filesystem::path& dir) {
  auto load = load_library_lenient(dir);
  if (!load.load_issues.empty()) {
    const auto& first = load.load_issues.front();
    throw StructureError(first.topic_id + ": " + first.message);
  }
  auto report = validate_library(load.library);
  if (!report.ok) {
    const auto& first = report.issues.front();
    throw StructureError(first.topic_id + ": " + first.code + ": " + first.message);
  }
  return std::move(load.library);
}

// ---------------------------------------------------------------------------

std::vector<BfsRow> bfs_serialize(const DialogueScript& script, std::optional<int> max_depth) {
  std::vector<BfsRow> rows;
  std::deque<std::pair<const ScriptNode*, int>> queue;
  queue.emplace_back(&script.root(), 0);
  while (!queue.empty()) {
    auto [node, depth] = queue.front();
    queue.pop_front();
    rows.push_back({depth, node->id, node->kind, node->text});
    if (max_depth && depth >= *max_depth) continue;
    for (const auto& child : node->children) queue.emplace_back(&script.node(child), depth + 1);
  }
  return rows;
}

std::vector<NodePath> enumerate_paths(const DialogueScript& script) {
  std::vector<NodePath> paths;
  NodePath current;
  std::function<void(const ScriptNode&)> walk = [&](const ScriptNode& node) {
    current.push_back(node.id);
    if (node.children.empty()) {
      paths.push_back(current);
    } else {
      for (const auto& child : node.children) walk(script.node(child));
    }
    current.pop_back();
  };
  walk(script.root());
  return paths;
}

std::vector<std::string> questions_on(const DialogueScript& script, const NodePath& path) {
  std::vector<std::string> out;
  for (const auto& id : path) {
    if (script.node(id).kind == NodeKind::TherapeuticQuestion) out.push_back(id);
  }
  return out;
}

}  // namespace scriptalign
