#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scriptalign/commands.hpp"

using namespace scriptalign;

int main(int argc, char** argv) {
  CLI::App app{"Script-aligned therapeutic dialogue engine"};
  app.set_config("--config", "scriptalign.toml", "TOML file with flag defaults");
  app.require_subcommand(1);

  // Shared flags live on the root so the config file can set them at top level.
  std::string library = "corpus";
  std::string condition = "rule_based";
  std::string backend = "scriptfaithful";
  std::string profile = "compliant";
  int sessions = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out;
  double threshold = 0.6;
  std::string labelmap = "core3";
  std::string assets;
  std::string recording;
  app.add_option("--library", library, "Script library directory")->capture_default_str();
  app.add_option("--condition", condition, "rule_based, pure_llm, sag_prompt or ssag")->capture_default_str();
  app.add_option("--backend", backend, "scriptfaithful, freeform, replay or live")->capture_default_str();
  app.add_option("--profile", profile, "compliant, digressive or adversarial")->capture_default_str();
  app.add_option("--sessions", sessions, "Number of simulated sessions")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--jobs", jobs, "Parallel sessions")->capture_default_str();
  app.add_option("--out", out, "Output path");
  app.add_option("--threshold", threshold, "Fuzzy match threshold")->capture_default_str();
  app.add_option("--labelmap", labelmap, "Strategy label map: core3, annomi, bimisc or a file")->capture_default_str();
  app.add_option("--assets", assets, "Assets directory (prompts, label maps, surveys)");
  app.add_option("--recording", recording, "Recording file for the replay backend");

  auto* validate = app.add_subcommand("validate", "Check a script library")->fallthrough();

  auto* simulate = app.add_subcommand("simulate", "Run sessions with synthetic users")->fallthrough();
  std::string topic;
  std::string record;
  int max_turns = 40;
  int digress_every = 3;
  simulate->add_option("--topic", topic, "Only simulate this topic");
  simulate->add_option("--record", record, "Write backend traffic to this recording");
  simulate->add_option("--max-turns", max_turns, "User messages per session")->capture_default_str();
  simulate->add_option("--digress-every", digress_every, "Off-topic period of the digressive profile")
      ->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "Compute Auto-Metric 1 and 2 over transcripts")->fallthrough();
  std::string transcripts;
  metrics->add_option("transcripts", transcripts, "Directory of transcript files")->required();

  auto* eval_pred = app.add_subcommand("eval-pred", "Score strategy predictions")->fallthrough();
  std::string gold, pred, mode = "single";
  bool map_labels = false;
  eval_pred->add_option("gold", gold, "Gold labels, one item per line")->required();
  eval_pred->add_option("pred", pred, "Predicted labels, one item per line")->required();
  eval_pred->add_option("--mode", mode, "single or multi")->capture_default_str();
  eval_pred->add_flag("--map-labels", map_labels, "Map raw label text through --labelmap first");

  auto* export_ft = app.add_subcommand("export-ft", "Export fine-tuning pairs")->fallthrough();

  auto* serve = app.add_subcommand("serve", "Run the HTTP API")->fallthrough();
  std::string host = "127.0.0.1", data_dir = "data", static_dir;
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--data", data_dir, "Event log directory")->capture_default_str();
  serve->add_option("--static", static_dir, "Built web client to serve under /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto optional_path = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
  };

  if (validate->parsed()) return cmd_validate(library, std::cout, std::cerr);

  if (simulate->parsed()) {
    if (out.empty()) {
      std::cerr << "error: simulate needs --out\n";
      return kExitUsage;
    }
    SimulateOptions options;
    options.library = library;
    options.condition = condition;
    options.backend = backend;
    options.profile = profile;
    if (!topic.empty()) options.topic = topic;
    options.sessions = sessions;
    options.seed = seed;
    options.jobs = jobs;
    options.out = out;
    options.labelmap = labelmap;
    options.recording = optional_path(recording);
    options.record = optional_path(record);
    options.max_turns = max_turns;
    options.digress_every = digress_every;
    options.assets = assets;
    return cmd_simulate(options, std::cout, std::cerr);
  }

  if (metrics->parsed()) {
    MetricsCommandOptions options;
    options.transcripts = transcripts;
    options.library = library;
    options.threshold = threshold;
    options.out = optional_path(out);
    return cmd_metrics(options, std::cout, std::cerr);
  }

  if (eval_pred->parsed()) {
    EvalPredOptions options;
    options.gold = gold;
    options.pred = pred;
    options.mode = mode;
    if (map_labels) options.labelmap = labelmap;
    options.out = optional_path(out);
    options.assets = assets;
    return cmd_eval_pred(options, std::cout, std::cerr);
  }

  if (export_ft->parsed()) {
    if (out.empty()) {
      std::cerr << "error: export-ft needs --out\n";
      return kExitUsage;
    }
    return cmd_export_ft(library, out, std::cout, std::cerr);
  }

  if (serve->parsed()) {
    ServeOptions options;
    options.library = library;
    options.data_dir = data_dir;
    options.host = host;
    options.port = port;
    options.static_dir = optional_path(static_dir);
    options.recording = optional_path(recording);
    options.labelmap = labelmap;
    options.assets = assets;
    return cmd_serve(options, std::cout, std::cerr);
  }
  return kExitUsage;
}
