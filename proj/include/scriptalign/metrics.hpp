#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scriptalign/script_model.hpp"
#include "scriptalign/text_similarity.hpp"
#include "scriptalign/transcript.hpp"

namespace scriptalign {

struct MetricsOptions {
  double match_threshold = kDefaultMatchThreshold;
  double branch_threshold = kDefaultBranchThreshold;
};

/// Options picked at each branch point, in order. User turns annotated with
/// an option id are authoritative; unannotated user text from an unaligned
/// session is matched against the option labels. Branch points nothing
/// resolves default to their first option, so the result always reaches a
/// Terminal.
std::vector<std::string> infer_choices(const Transcript& transcript, const DialogueScript& script,
                                       const MetricsOptions& options = {});

struct QuestionCoverage {
  std::size_t posed = 0;
  std::size_t total = 0;

  /// 1.0 when the path carries no question.
  double ratio() const { return total == 0 ? 1.0 : static_cast<double>(posed) / static_cast<double>(total); }
};

/// Questions on the inferred path, and how many of them some bot turn matches.
QuestionCoverage question_coverage(const Transcript& transcript, const DialogueScript& script,
                                   const MetricsOptions& options = {});

/// Share of transcripts that reached a natural conclusion. Throws UnknownTopic.
double auto_metric_1(std::span<const Transcript> transcripts, const ScriptLibrary& library);

/// Mean per-transcript question coverage. Throws UnknownTopic.
double auto_metric_2(std::span<const Transcript> transcripts, const ScriptLibrary& library,
                     const MetricsOptions& options = {});

struct TopicMetrics {
  std::size_t session_count = 0;
  double metric1_ratio = 0.0;
  double metric2_ratio = 0.0;
};

struct MetricsReport {
  double metric1_ratio = 0.0;
  double metric2_ratio = 0.0;
  std::size_t session_count = 0;
  std::map<std::string, TopicMetrics> per_topic;
};

MetricsReport compute_metrics(std::span<const Transcript> transcripts, const ScriptLibrary& library,
                              const MetricsOptions& options = {});

/// One report per condition present in the batch.
std::map<Condition, MetricsReport> compute_metrics_by_condition(std::span<const Transcript> transcripts,
                                                                const ScriptLibrary& library,
                                                                const MetricsOptions& options = {});

nlohmann::json metrics_report_to_json(const MetricsReport& report);

/// Ratio as a percentage with two decimals, e.g. 0.857142 -> "85.71".
std::string format_percent(double ratio);

/// Aligned plain-text table with "Metric 1" and "Metric 2" columns.
std::string render_metrics_table(const std::map<Condition, MetricsReport>& reports);

// Strategy prediction evaluation

enum class PredMode { SingleLabel, MultiLabel };

std::string_view to_string(PredMode mode);
std::optional<PredMode> parse_pred_mode(std::string_view text);

using LabelSet = std::set<std::string>;

struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold occurrences
};

struct PredEvalReport {
  PredMode mode = PredMode::SingleLabel;
  std::size_t item_count = 0;
  double accuracy = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, LabelScores> per_label;
};

/// Accuracy is exact (set) match. F1 is computed one-vs-rest per label over
/// every label seen in gold or predictions; undefined ratios count as 0.
/// Throws LengthMismatch, EmptyLabelSet, or BadRequest when a single-label
/// item carries more than one label.
PredEvalReport eval_strategy_predictions(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                                         PredMode mode);

nlohmann::json pred_eval_to_json(const PredEvalReport& report);
std::string render_pred_eval(const PredEvalReport& report);

/// One item per non-empty line: a JSON string, a JSON array of strings, or
/// raw text with labels separated by ';'.
std::vector<LabelSet> parse_label_lines(std::istream& in);

}  // namespace scriptalign
