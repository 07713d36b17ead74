#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "scriptalign/errors.hpp"
#include "scriptalign/script_model.hpp"
#include "test_support.hpp"

using namespace scriptalign;

namespace {

std::string node_json(const std::string& kind, const std::string& speaker, const std::string& text,
                      const std::string& children) {
  return R"({"kind":")" + kind + R"(","speaker":")" + speaker + R"(","text":")" + text + R"(","children":[)" +
         children + "]}";
}

std::string doc(const std::string& root, const std::string& nodes) {
  return R"({"topic_id":"t","title":"T","framework":"MI","root":")" + root + R"(","nodes":{)" + nodes + "}}";
}

const std::string kLinear = doc("q", R"("q":)" + node_json("TherapeuticQuestion", "Bot", "How are you?", R"("r")") +
                                         R"(,"r":)" + node_json("Reflection", "Bot", "I hear you.", R"("end")") +
                                         R"(,"end":)" + node_json("Terminal", "Bot", "", ""));

}  // namespace

TEST_CASE("parse_script reads the shipped confidence fixture") {
  auto source = testing::read_file(testing::corpus_dir() / "topics" / "confidence_rating.json");
  auto script = parse_script(source);
  CHECK(script.topic_id() == "confidence_rating");
  CHECK(script.framework() == Framework::MI);
  CHECK(script.nodes().size() == 7);
  const auto& root = script.root();
  CHECK(root.kind == NodeKind::TherapeuticQuestion);
  CHECK(root.text.rfind("On a scale of 0 to 10, how confident are you", 0) == 0);
  REQUIRE(root.children.size() == 2);
  for (const auto& child : root.children) CHECK(script.node(child).kind == NodeKind::UserOption);
}

TEST_CASE("parse, serialize, parse is a fixed point") {
  for (const auto& [id, script] : testing::corpus().scripts()) {
    auto again = parse_script(serialize_script(script));
    CHECK(again == script);
    CHECK(serialize_script(again) == serialize_script(script));
  }
}

TEST_CASE("single terminal document has no question") {
  auto source = doc("bye", R"("bye":)" + node_json("Terminal", "Bot", "Bye.", ""));
  CHECK_THROWS_AS(parse_script(source), StructureError);
  try {
    parse_script(source);
  } catch (const StructureError& e) {
    CHECK(std::string(e.what()).find("NO_QUESTION") != std::string::npos);
  }
}

TEST_CASE("cycle back to the root names the node") {
  auto source = doc("n1", R"("n1":)" + node_json("TherapeuticQuestion", "Bot", "Q1?", R"("n2")") + R"(,"n2":)" +
                              node_json("Reflection", "Bot", "R2.", R"("n3")") + R"(,"n3":)" +
                              node_json("Reflection", "Bot", "R3.", R"("n1")"));
  try {
    parse_script(source);
    FAIL("expected StructureError");
  } catch (const StructureError& e) {
    CHECK(std::string(e.what()).find("cycle via n1") != std::string::npos);
  }
}

TEST_CASE("syntax and schema errors") {
  CHECK_THROWS_AS(parse_script("{not json"), SyntaxError);
  CHECK_THROWS_AS(parse_script(R"({"topic_id":"t"})"), SchemaError);
  auto extra = kLinear;
  extra.insert(extra.size() - 1, R"(,"colour":"red")");
  CHECK_THROWS_AS(parse_script(extra), SchemaError);
  auto bad_kind = doc("q", R"("q":)" + node_json("Question", "Bot", "Q?", ""));
  CHECK_THROWS_AS(parse_script(bad_kind), SchemaError);
}

TEST_CASE("injected fault corpora each report exactly one issue") {
  const std::pair<const char*, std::string_view> cases[] = {
      {"cycle", issue::kCycle},
      {"duplicate_id", issue::kDuplicateId},
      {"orphan", issue::kOrphan},
      {"bot_branch", issue::kWellFormedBranch},
      {"no_question", issue::kNoQuestion},
      {"missing_terminal", issue::kMissingTerminal},
  };
  for (const auto& [dir, code] : cases) {
    CAPTURE(dir);
    auto load = load_library_lenient(testing::fixtures_dir() / "faults" / dir);
    auto report = validate_library(load.library);
    std::vector<ValidationIssue> issues = load.load_issues;
    issues.insert(issues.end(), report.issues.begin(), report.issues.end());
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].code == code);
  }
}

TEST_CASE("validate_library on corpus and empty library") {
  auto report = validate_library(testing::corpus());
  CHECK(report.ok);
  CHECK(report.issues.empty());
  auto empty = validate_library(ScriptLibrary{});
  CHECK(empty.ok);
  CHECK(empty.issues.empty());
}

TEST_CASE("shipped corpus covers both frameworks with enough nodes") {
  std::size_t nodes = 0;
  std::set<Framework> frameworks;
  for (const auto& [_, script] : testing::corpus().scripts()) {
    nodes += script.nodes().size();
    frameworks.insert(script.framework());
  }
  CHECK(testing::corpus().size() >= 3);
  CHECK(nodes >= 60);
  CHECK(frameworks.size() == 2);
}

TEST_CASE("bfs_serialize") {
  SUBCASE("single node") {
    auto script = parse_script_document(doc("q", R"("q":)" + node_json("TherapeuticQuestion", "Bot", "Q?", "")));
    auto rows = bfs_serialize(script);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].depth == 0);
    CHECK(rows[0].node_id == "q");
  }
  SUBCASE("textbook order") {
    auto script = parse_script_document(
        doc("root", R"("root":)" + node_json("TherapeuticQuestion", "Bot", "Q?", R"("a","b")") + R"(,"a":)" +
                        node_json("UserOption", "User", "A", R"("c")") + R"(,"b":)" +
                        node_json("UserOption", "User", "B", "") + R"(,"c":)" + node_json("Terminal", "Bot", "", "")));
    std::vector<std::string> ids;
    for (const auto& row : bfs_serialize(script)) ids.push_back(row.node_id);
    CHECK(ids == std::vector<std::string>{"root", "a", "b", "c"});
  }
  SUBCASE("golden listing of the confidence fixture") {
    std::ostringstream out;
    for (const auto& row : bfs_serialize(testing::corpus().topic("confidence_rating")))
      out << row.depth << "\t" << row.node_id << "\t" << to_string(row.kind) << "\t" << row.text << "\n";
    CHECK(testing::matches_golden("confidence_rating.bfs.tsv", out.str()));
  }
  SUBCASE("each node listed once; max_depth truncates") {
    for (const auto& [_, script] : testing::corpus().scripts()) {
      auto rows = bfs_serialize(script);
      std::multiset<std::string> listed;
      for (const auto& row : rows) listed.insert(row.node_id);
      std::multiset<std::string> all;
      for (const auto& node : script.nodes()) all.insert(node.id);
      CHECK(listed == all);
      for (const auto& row : bfs_serialize(script, 1)) CHECK(row.depth <= 1);
    }
  }
}

TEST_CASE("enumerate_paths") {
  auto linear = parse_script(kLinear);
  auto paths = enumerate_paths(linear);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0] == NodePath{"q", "r", "end"});

  auto branch = parse_script(doc("q", R"("q":)" + node_json("TherapeuticQuestion", "Bot", "Q?", R"("a","b")") +
                                          R"(,"a":)" + node_json("UserOption", "User", "A", R"("ea")") + R"(,"b":)" +
                                          node_json("UserOption", "User", "B", R"("eb")") + R"(,"ea":)" +
                                          node_json("Terminal", "Bot", "", "") + R"(,"eb":)" +
                                          node_json("Terminal", "Bot", "", "")));
  CHECK(enumerate_paths(branch).size() == 2);

  // Hand-drawn leaf counts of the shipped topics.
  const std::map<std::string, std::size_t> leaves = {{"confidence_rating", 2},
                                                     {"supportive_social_environment", 3},
                                                     {"exploring_barriers", 4},
                                                     {"should_statements", 2}};
  for (const auto& [topic, count] : leaves) {
    const auto& script = testing::corpus().topic(topic);
    auto all = enumerate_paths(script);
    CHECK(all.size() == count);
    std::size_t terminals = std::count_if(script.nodes().begin(), script.nodes().end(),
                                          [](const auto& n) { return n.kind == NodeKind::Terminal; });
    CHECK(all.size() == terminals);
    std::set<NodePath> unique(all.begin(), all.end());
    CHECK(unique.size() == all.size());
    for (const auto& path : all) {
      CHECK(path.front() == script.root_id());
      CHECK(script.node(path.back()).kind == NodeKind::Terminal);
    }
  }
}

TEST_CASE("library loading errors") {
  CHECK_THROWS_AS(load_library(testing::fixtures_dir() / "does_not_exist"), IoError);
  CHECK_THROWS_AS(load_library(testing::fixtures_dir() / "faults" / "cycle"), StructureError);
  CHECK_THROWS_AS(testing::corpus().topic("x"), UnknownTopic);
}
