#include <doctest.h>

#include <sstream>

#include "scriptalign/commands.hpp"
#include "scriptalign/errors.hpp"
#include "scriptalign/metrics.hpp"
#include "scriptalign/prompt_assets.hpp"
#include "test_support.hpp"

using namespace scriptalign;

namespace {

std::string dir_listing(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += f.filename().string() + "\n" + testing::read_file(f);
  return out;
}

SimulateOptions simulate_options(const std::filesystem::path& out, const std::string& condition) {
  SimulateOptions options;
  options.library = testing::corpus_dir();
  options.condition = condition;
  options.sessions = 6;
  options.seed = 11;
  options.out = out;
  options.assets = default_assets_dir();
  return options;
}

}  // namespace

TEST_CASE("validate") {
  std::ostringstream out, err;
  CHECK(cmd_validate(testing::corpus_dir(), out, err) == kExitOk);
  CHECK(out.str().rfind("ok: 4 topics, 71 nodes", 0) == 0);

  std::ostringstream out2, err2;
  CHECK(cmd_validate(testing::fixtures_dir() / "faults" / "cycle", out2, err2) == kExitDomainFailure);
  CHECK(out2.str().find("CYCLE") != std::string::npos);

  std::ostringstream out3, err3;
  CHECK(cmd_validate(testing::fixtures_dir() / "nowhere", out3, err3) == kExitUsage);
}

TEST_CASE("make_backend") {
  CHECK(make_backend("scriptfaithful")->name() == "scriptfaithful");
  CHECK(make_backend("freeform")->name() == "freeform");
  CHECK_THROWS_AS(make_backend("oracle"), UnknownBackend);
}

TEST_CASE("simulate is deterministic for a fixed seed") {
  for (const auto* condition : {"rule_based", "sag_prompt", "ssag"}) {
    CAPTURE(condition);
    testing::TempDir a, b;
    std::ostringstream out, err;
    auto options = simulate_options(a.path(), condition);
    options.jobs = 3;
    CHECK(cmd_simulate(options, out, err) == kExitOk);
    options.out = b.path();
    options.jobs = 1;
    CHECK(cmd_simulate(options, out, err) == kExitOk);
    CHECK(dir_listing(a.path()) == dir_listing(b.path()));
    auto transcripts = load_transcript_dir(a.path());
    CHECK(transcripts.size() == 6);
    CHECK(auto_metric_1(transcripts, testing::corpus()) == 1.0);
  }
}

TEST_CASE("simulate with the freeform backend matches no questions") {
  testing::TempDir dir;
  std::ostringstream out, err;
  auto options = simulate_options(dir.path(), "sag_prompt");
  options.backend = "freeform";
  options.sessions = 5;
  options.max_turns = 8;
  CHECK(cmd_simulate(options, out, err) == kExitOk);
  auto transcripts = load_transcript_dir(dir.path());
  CHECK(transcripts.size() == 5);
  for (const auto& t : transcripts)
    for (const auto& turn : t.turns) CHECK_FALSE(turn.matched_node_id.has_value());
  CHECK(auto_metric_2(transcripts, testing::corpus()) == 0.0);
}

TEST_CASE("simulate records and replays") {
  testing::TempDir dir;
  std::ostringstream out, err;
  auto options = simulate_options(dir / "first", "ssag");
  options.sessions = 2;
  options.record = dir / "rec.jsonl";
  CHECK(cmd_simulate(options, out, err) == kExitOk);

  options.out = dir / "second";
  options.record.reset();
  options.backend = "replay";
  options.recording = dir / "rec.jsonl";
  CHECK(cmd_simulate(options, out, err) == kExitOk);
  CHECK(dir_listing(dir / "first") == dir_listing(dir / "second"));
}

TEST_CASE("simulate usage errors") {
  testing::TempDir dir;
  std::ostringstream out, err;
  auto options = simulate_options(dir.path(), "telepathy");
  CHECK(cmd_simulate(options, out, err) == kExitUsage);
  options = simulate_options(dir.path(), "sag_prompt");
  options.backend = "oracle";
  CHECK(cmd_simulate(options, out, err) == kExitUsage);
  options = simulate_options(dir.path(), "rule_based");
  options.topic = "nope";
  CHECK(cmd_simulate(options, out, err) == kExitUsage);
  options = simulate_options(dir.path(), "rule_based");
  options.profile = "grumpy";
  CHECK(cmd_simulate(options, out, err) != kExitOk);
}

TEST_CASE("metrics command") {
  testing::TempDir dir;
  std::ostringstream sim_out, err;
  CHECK(cmd_simulate(simulate_options(dir / "t", "rule_based"), sim_out, err) == kExitOk);

  MetricsCommandOptions options;
  options.transcripts = dir / "t";
  options.library = testing::corpus_dir();
  options.out = dir / "report";
  std::ostringstream out;
  CHECK(cmd_metrics(options, out, err) == kExitOk);
  CHECK(out.str().find("rule_based") != std::string::npos);
  CHECK(out.str().find("100.00") != std::string::npos);
  auto json = nlohmann::json::parse(testing::read_file(dir / "report" / "metrics.json"));
  CHECK(json["conditions"]["rule_based"]["metric1_ratio"] == 1.0);
  CHECK(testing::read_file(dir / "report" / "metrics.txt") == out.str());

  options.transcripts = dir / "missing";
  std::ostringstream out2;
  CHECK(cmd_metrics(options, out2, err) == kExitUsage);
}

TEST_CASE("eval-pred command") {
  testing::TempDir dir;
  testing::write_file(dir / "gold.txt", "Q\nR\nR\nI\n");
  testing::write_file(dir / "pred.txt", "Q\nR\nI\nI\n");
  testing::write_file(dir / "short.txt", "Q\n");
  EvalPredOptions options;
  options.gold = dir / "gold.txt";
  options.pred = dir / "pred.txt";
  options.out = dir / "report.json";
  options.assets = default_assets_dir();
  std::ostringstream out, err;
  CHECK(cmd_eval_pred(options, out, err) == kExitOk);
  auto report = nlohmann::json::parse(testing::read_file(dir / "report.json"));
  CHECK(report["accuracy"] == 0.75);
  CHECK(report["macro_f1"].get<double>() == doctest::Approx(7.0 / 9.0));

  options.pred = dir / "gold.txt";
  std::ostringstream same;
  CHECK(cmd_eval_pred(options, same, err) == kExitOk);
  CHECK(same.str().find("Acc 1.0000  micro-F1 1.0000  macro-F1 1.0000") != std::string::npos);

  options.pred = dir / "short.txt";
  CHECK(cmd_eval_pred(options, out, err) == kExitDomainFailure);

  options.pred = dir / "missing.txt";
  CHECK(cmd_eval_pred(options, out, err) == kExitUsage);

  SUBCASE("raw label text mapped through a label map") {
    testing::write_file(dir / "raw_gold.txt", "asking questions\nreflective listening\n");
    testing::write_file(dir / "raw_pred.txt", "Question\nReflection\n");
    options.gold = dir / "raw_gold.txt";
    options.pred = dir / "raw_pred.txt";
    options.labelmap = "core3";
    std::ostringstream mapped;
    CHECK(cmd_eval_pred(options, mapped, err) == kExitOk);
    CHECK(nlohmann::json::parse(testing::read_file(dir / "report.json"))["accuracy"] == 1.0);
  }
}

TEST_CASE("export-ft command") {
  testing::TempDir dir;
  std::ostringstream out, err;
  CHECK(cmd_export_ft(testing::fixtures_dir() / "valid_mini", dir / "ft.jsonl", out, err) == kExitOk);
  std::istringstream lines(testing::read_file(dir / "ft.jsonl"));
  std::string header;
  std::getline(lines, header);
  CHECK(nlohmann::json::parse(header)["pair_count"] == 4);
  int count = 0;
  for (std::string line; std::getline(lines, line);) count += !line.empty();
  CHECK(count == 4);

  testing::write_file(dir / "empty" / "library.json", R"({"version":"1","topics":[]})");
  CHECK(cmd_export_ft(dir / "empty", dir / "empty.jsonl", out, err) == kExitOk);
  CHECK(nlohmann::json::parse(testing::read_file(dir / "empty.jsonl"))["pair_count"] == 0);

  // A regular file where a directory should be makes the path unwritable.
  testing::write_file(dir / "blocker", "x");
  CHECK(cmd_export_ft(testing::fixtures_dir() / "valid_mini", dir / "blocker" / "ft.jsonl", out, err) == kExitUsage);
}
