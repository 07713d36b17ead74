#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "scriptalign/llm_backend.hpp"

namespace scriptalign {

/// Process exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainFailure = 1;
inline constexpr int kExitUsage = 2;

/// scriptfaithful, freeform, replay (needs `recording`) or live (reads the
/// LLM_API_* environment). Throws UnknownBackend.
std::shared_ptr<Backend> make_backend(const std::string& name,
                                      const std::optional<std::filesystem::path>& recording = std::nullopt);

int cmd_validate(const std::filesystem::path& library, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  std::filesystem::path library;
  std::string condition = "rule_based";
  std::string backend = "scriptfaithful";
  std::string profile = "compliant";
  std::optional<std::string> topic;
  int sessions = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::filesystem::path out;
  std::string labelmap = "core3";
  std::optional<std::filesystem::path> recording;  // replay source
  std::optional<std::filesystem::path> record;     // capture backend traffic here
  int max_turns = 40;
  int digress_every = 3;
  std::filesystem::path assets;
};

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

struct MetricsCommandOptions {
  std::filesystem::path transcripts;
  std::filesystem::path library;
  double threshold = 0.6;
  std::optional<std::filesystem::path> out;  // directory for metrics.json and metrics.txt
};

int cmd_metrics(const MetricsCommandOptions& options, std::ostream& out, std::ostream& err);

struct EvalPredOptions {
  std::filesystem::path gold;
  std::filesystem::path pred;
  std::string mode = "single";
  /// When set, raw label text is mapped to this label map's codes first.
  std::optional<std::string> labelmap;
  std::optional<std::filesystem::path> out;  // JSON report
  std::filesystem::path assets;
};

int cmd_eval_pred(const EvalPredOptions& options, std::ostream& out, std::ostream& err);

int cmd_export_ft(const std::filesystem::path& library, const std::filesystem::path& out_path, std::ostream& out,
                  std::ostream& err);

struct ServeOptions {
  std::filesystem::path library;
  std::filesystem::path data_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::filesystem::path> recording;
  std::string labelmap = "core3";
  std::filesystem::path assets;
};

/// Blocks until the server stops.
int cmd_serve(const ServeOptions& options, std::ostream& out, std::ostream& err);

}  // namespace scriptalign
