#include "scriptalign/commands.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <httplib.h>

#include "scriptalign/errors.hpp"
#include "scriptalign/http_api.hpp"
#include "scriptalign/label_map.hpp"
#include "scriptalign/metrics.hpp"
#include "scriptalign/sag_engine.hpp"
#include "scriptalign/session_service.hpp"
#include "scriptalign/simulation.hpp"

namespace scriptalign {

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Io:
    case ErrorCode::Syntax:
    case ErrorCode::Schema:
    case ErrorCode::BadRequest:
    case ErrorCode::UnknownBackend:
    case ErrorCode::UnknownTopic:
    case ErrorCode::UnknownLabelMap:
    case ErrorCode::UnknownInstrument:
      return kExitUsage;
    default:
      return kExitDomainFailure;
  }
}

template <class F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

EngineConfig engine_config_for(const std::filesystem::path& assets) {
  EngineConfig config;
  config.prompts = std::make_shared<const PromptTemplates>(PromptTemplates::load(assets));
  return config;
}

std::filesystem::path assets_or_default(const std::filesystem::path& assets) {
  return assets.empty() ? default_assets_dir() : assets;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

std::shared_ptr<Backend> make_backend(const std::string& name, const std::optional<std::filesystem::path>& recording) {
  if (name == "scriptfaithful") return std::make_shared<ScriptFaithfulMock>();
  if (name == "freeform") return std::make_shared<FreeformMock>();
  if (name == "replay") {
    if (!recording) throw UnknownBackend("the replay backend needs a recording file");
    return ReplayMock::from_file(*recording);
  }
  if (name == "live") {
    auto config = LiveHttpConfig::from_env();
    if (!config) throw UnknownBackend("the live backend needs LLM_API_BASE (and LLM_API_KEY, LLM_MODEL)");
    return std::make_shared<LiveHttpBackend>(*config);
  }
  throw UnknownBackend("unknown backend \"" + name + "\"");
}

int cmd_validate(const std::filesystem::path& library, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!std::filesystem::exists(library)) throw IoError("no such path: " + library.string());
    auto load = load_library_lenient(library);
    auto report = validate_library(load.library);
    std::vector<ValidationIssue> issues = load.load_issues;
    issues.insert(issues.end(), report.issues.begin(), report.issues.end());
    std::size_t nodes = 0;
    for (const auto& [_, script] : load.library.scripts()) nodes += script.nodes().size();
    for (const auto& issue : issues) {
      out << issue.code << "  " << issue.topic_id;
      if (issue.node_id) out << ":" << *issue.node_id;
      out << "  " << issue.message << "\n";
    }
    if (issues.empty()) {
      out << "ok: " << load.library.size() << " topics, " << nodes << " nodes\n";
      return kExitOk;
    }
    out << issues.size() << (issues.size() == 1 ? " issue" : " issues") << " in " << library.string() << "\n";
    return kExitDomainFailure;
  });
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.sessions < 1) throw BadRequest("--sessions must be at least 1");
    if (options.jobs < 1) throw BadRequest("--jobs must be at least 1");
    auto condition = parse_condition(options.condition);
    if (!condition) throw BadRequest("unknown condition \"" + options.condition + "\"");
    auto library = load_library(options.library);
    auto profile = make_profile(options.profile, options.digress_every, options.max_turns);
    const auto assets = assets_or_default(options.assets);
    const auto config = engine_config_for(assets);
    const auto label_map = load_label_map(options.labelmap, assets);

    std::shared_ptr<Backend> backend;
    if (*condition != Condition::RuleBased) {
      backend = make_backend(options.backend, options.recording);
      if (options.record) backend = std::make_shared<RecordingBackend>(backend, *options.record);
    }

    std::vector<std::string> topics;
    if (options.topic) {
      library.topic(*options.topic);
      topics.push_back(*options.topic);
    } else {
      for (const auto& [id, _] : library.scripts()) topics.push_back(id);
    }
    if (topics.empty()) throw BadRequest("the library has no topics");

    std::filesystem::create_directories(options.out);
    const int width = static_cast<int>(std::to_string(options.sessions - 1).size());
    std::atomic<int> next{0};
    std::atomic<int> completed{0};
    std::mutex error_mutex;
    std::optional<std::string> failure;
    std::optional<int> failure_code;

    auto worker = [&] {
      for (int i = next++; i < options.sessions; i = next++) {
        try {
          std::ostringstream id;
          id << "sim-" << options.seed << "-" << std::setw(width) << std::setfill('0') << i;
          SimulationSpec spec;
          spec.condition = *condition;
          spec.session_id = id.str();
          spec.profile = profile;
          spec.seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(i);
          const auto& script = library.topic(topics[static_cast<std::size_t>(i) % topics.size()]);
          auto transcript = simulate_session(spec, EngineDeps{script, backend.get(), &label_map, config});
          if (transcript.completed_flag) ++completed;
          save_transcript(options.out / (spec.session_id + ".jsonl"), transcript);
        } catch (const Error& e) {
          std::lock_guard lock(error_mutex);
          if (!failure) {
            failure = std::string(error_code_name(e.code())) + ": " + e.what();
            failure_code = exit_code_for(e);
          }
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    const int jobs = std::min(options.jobs, options.sessions);
    for (int j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) {
      err << "error: " << *failure << "\n";
      return *failure_code;
    }
    out << "wrote " << options.sessions << " transcripts to " << options.out.string() << " (" << completed
        << " completed)\n";
    return kExitOk;
  });
}

int cmd_metrics(const MetricsCommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.threshold < 0.0 || options.threshold > 1.0) throw BadRequest("--threshold must lie in [0, 1]");
    auto library = load_library(options.library);
    auto transcripts = load_transcript_dir(options.transcripts);
    MetricsOptions metric_options;
    metric_options.match_threshold = options.threshold;
    auto by_condition = compute_metrics_by_condition(transcripts, library, metric_options);
    auto overall = compute_metrics(transcripts, library, metric_options);

    nlohmann::json report{{"threshold", options.threshold},
                          {"overall", metrics_report_to_json(overall)},
                          {"conditions", nlohmann::json::object()}};
    for (const auto& [condition, r] : by_condition)
      report["conditions"][std::string(to_string(condition))] = metrics_report_to_json(r);
    const auto table = render_metrics_table(by_condition);
    out << table;
    if (options.out) {
      open_output(*options.out / "metrics.json") << report.dump(2) << "\n";
      open_output(*options.out / "metrics.txt") << table;
    }
    return kExitOk;
  });
}

int cmd_eval_pred(const EvalPredOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto mode = parse_pred_mode(options.mode);
    if (!mode) throw BadRequest("unknown mode \"" + options.mode + "\" (single or multi)");
    auto read = [](const std::filesystem::path& path) {
      std::ifstream in(path);
      if (!in) throw IoError("cannot read " + path.string());
      return parse_label_lines(in);
    };
    auto gold = read(options.gold);
    auto pred = read(options.pred);
    if (options.labelmap) {
      auto map = load_label_map(*options.labelmap, assets_or_default(options.assets));
      auto canon = [&](std::vector<LabelSet>& items) {
        for (auto& item : items) {
          LabelSet mapped;
          for (const auto& raw : item)
            for (const auto& label : parse_labels(raw, map).labels) mapped.insert(label.code);
          item = std::move(mapped);
        }
      };
      canon(gold);
      canon(pred);
    }
    auto report = eval_strategy_predictions(gold, pred, *mode);
    out << render_pred_eval(report);
    if (options.out) open_output(*options.out) << pred_eval_to_json(report).dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_export_ft(const std::filesystem::path& library, const std::filesystem::path& out_path, std::ostream& out,
                  std::ostream& err) {
  return guarded(err, [&] {
    auto lib = load_library(library);
    auto pairs = export_finetune_pairs(lib);
    std::ostringstream body;
    body << nlohmann::json{{"format", "scriptalign-finetune"}, {"version", 1}, {"pair_count", pairs.size()}}.dump()
         << "\n";
    for (const auto& pair : pairs) body << finetune_pair_to_json(pair).dump() << "\n";
    auto file = open_output(out_path);
    file << body.str();
    file.flush();
    if (!file) throw IoError("cannot write " + out_path.string());
    out << "wrote " << pairs.size() << " pairs to " << out_path.string() << "\n";
    return kExitOk;
  });
}

int cmd_serve(const ServeOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto assets = assets_or_default(options.assets);
    ServiceOptions service_options;
    service_options.data_dir = options.data_dir;
    service_options.engine = engine_config_for(assets);
    service_options.label_map = std::make_shared<const LabelMap>(load_label_map(options.labelmap, assets));
    service_options.instruments = load_survey_instruments(assets / "surveys");
    SessionService service(load_library(options.library), std::move(service_options));
    service.register_backend("scriptfaithful", make_backend("scriptfaithful"));
    service.register_backend("freeform", make_backend("freeform"));
    if (options.recording) service.register_backend("replay", make_backend("replay", options.recording));
    if (LiveHttpConfig::from_env()) service.register_backend("live", make_backend("live"));

    httplib::Server server;
    mount_api(server, service, options.static_dir);
    if (!server.bind_to_port(options.host, options.port))
      throw IoError("cannot listen on " + options.host + ":" + std::to_string(options.port));
    out << "listening on http://" << options.host << ":" << options.port << "\n" << std::flush;
    server.listen_after_bind();
    return kExitOk;
  });
}

}  // namespace scriptalign
