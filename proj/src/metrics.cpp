#include "scriptalign/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <sstream>

#include "scriptalign/errors.hpp"
#include "scriptalign/rule_engine.hpp"

namespace scriptalign {

namespace {

std::optional<std::string> pick_option(const Transcript& transcript, const DialogueScript& script,
                                       const ScriptNode& branch, std::size_t& cursor, const MetricsOptions& options) {
  const bool read_text = transcript.condition == Condition::PureLlm;
  for (std::size_t i = cursor; i < transcript.turns.size(); ++i) {
    const auto& turn = transcript.turns[i];
    if (turn.role != Speaker::User) continue;
    if (turn.option_id) {
      if (std::find(branch.children.begin(), branch.children.end(), *turn.option_id) != branch.children.end()) {
        cursor = i + 1;
        return turn.option_id;
      }
      continue;
    }
    if (!read_text) continue;
    double best = -1.0;
    const std::string* best_id = nullptr;
    for (const auto& child : branch.children) {
      double sim = fuzzy_similarity(turn.text, script.node(child).text);
      if (sim > best) {
        best = sim;
        best_id = &child;
      }
    }
    if (best_id && best >= options.branch_threshold) {
      cursor = i + 1;
      return *best_id;
    }
  }
  return std::nullopt;
}

const DialogueScript& script_for(const Transcript& transcript, const ScriptLibrary& library) {
  return library.topic(transcript.topic_id);
}

void check_topics(std::span<const Transcript> transcripts, const ScriptLibrary& library) {
  for (const auto& t : transcripts) script_for(t, library);
}

}  // namespace

std::vector<std::string> infer_choices(const Transcript& transcript, const DialogueScript& script,
                                       const MetricsOptions& options) {
  std::vector<std::string> choices;
  std::size_t cursor = 0;
  const ScriptNode* node = &script.root();
  std::size_t guard = script.nodes().size() + 1;
  while (!node->children.empty() && guard-- > 0) {
    if (script.is_branch_point(*node)) {
      auto chosen = pick_option(transcript, script, *node, cursor, options);
      choices.push_back(chosen ? *chosen : node->children.front());
      node = &script.node(choices.back());
    } else {
      node = &script.node(node->children.front());
    }
  }
  return choices;
}

QuestionCoverage question_coverage(const Transcript& transcript, const DialogueScript& script,
                                   const MetricsOptions& options) {
  auto choices = infer_choices(transcript, script, options);
  auto path = oracle_path(script, choices);
  QuestionCoverage coverage;
  for (const auto& qid : questions_on(script, path)) {
    ++coverage.total;
    const auto& question = script.node(qid).text;
    for (const auto& turn : transcript.turns) {
      if (turn.role == Speaker::Bot && fuzzy_similarity(turn.text, question) >= options.match_threshold) {
        ++coverage.posed;
        break;
      }
    }
  }
  return coverage;
}

double auto_metric_1(std::span<const Transcript> transcripts, const ScriptLibrary& library) {
  check_topics(transcripts, library);
  if (transcripts.empty()) return 0.0;
  auto done = std::count_if(transcripts.begin(), transcripts.end(), [](const auto& t) { return t.completed_flag; });
  return static_cast<double>(done) / static_cast<double>(transcripts.size());
}

double auto_metric_2(std::span<const Transcript> transcripts, const ScriptLibrary& library,
                     const MetricsOptions& options) {
  check_topics(transcripts, library);
  if (transcripts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : transcripts) sum += question_coverage(t, script_for(t, library), options).ratio();
  return sum / static_cast<double>(transcripts.size());
}

MetricsReport compute_metrics(std::span<const Transcript> transcripts, const ScriptLibrary& library,
                              const MetricsOptions& options) {
  MetricsReport report;
  report.metric1_ratio = auto_metric_1(transcripts, library);
  report.metric2_ratio = auto_metric_2(transcripts, library, options);
  report.session_count = transcripts.size();
  std::map<std::string, std::vector<Transcript>> by_topic;
  for (const auto& t : transcripts) by_topic[t.topic_id].push_back(t);
  for (const auto& [topic, group] : by_topic) {
    TopicMetrics m;
    m.session_count = group.size();
    m.metric1_ratio = auto_metric_1(group, library);
    m.metric2_ratio = auto_metric_2(group, library, options);
    report.per_topic[topic] = m;
  }
  return report;
}

std::map<Condition, MetricsReport> compute_metrics_by_condition(std::span<const Transcript> transcripts,
                                                                const ScriptLibrary& library,
                                                                const MetricsOptions& options) {
  std::map<Condition, std::vector<Transcript>> groups;
  for (const auto& t : transcripts) groups[t.condition].push_back(t);
  std::map<Condition, MetricsReport> out;
  for (const auto& [condition, group] : groups) out[condition] = compute_metrics(group, library, options);
  return out;
}

nlohmann::json metrics_report_to_json(const MetricsReport& report) {
  nlohmann::json per_topic = nlohmann::json::object();
  for (const auto& [topic, m] : report.per_topic)
    per_topic[topic] = {{"session_count", m.session_count},
                        {"metric1_ratio", m.metric1_ratio},
                        {"metric2_ratio", m.metric2_ratio}};
  return {{"metric1_ratio", report.metric1_ratio},
          {"metric2_ratio", report.metric2_ratio},
          {"session_count", report.session_count},
          {"per_topic", per_topic}};
}

std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", ratio * 100.0);
  return buf;
}

std::string render_metrics_table(const std::map<Condition, MetricsReport>& reports) {
  std::size_t width = std::string("Condition").size();
  for (const auto& [condition, _] : reports) width = std::max(width, to_string(condition).size());
  std::ostringstream out;
  auto row = [&](std::string_view a, std::string_view b, std::string_view c, std::string_view d) {
    out << a << std::string(width - a.size() + 2, ' ');
    out << std::string(8 - std::min<std::size_t>(8, b.size()), ' ') << b << "  ";
    out << std::string(8 - std::min<std::size_t>(8, c.size()), ' ') << c << "  ";
    out << std::string(8 - std::min<std::size_t>(8, d.size()), ' ') << d << "\n";
  };
  row("Condition", "Sessions", "Metric 1", "Metric 2");
  for (const auto& [condition, report] : reports)
    row(to_string(condition), std::to_string(report.session_count), format_percent(report.metric1_ratio),
        format_percent(report.metric2_ratio));
  return out.str();
}

std::string_view to_string(PredMode mode) { return mode == PredMode::SingleLabel ? "single" : "multi"; }

std::optional<PredMode> parse_pred_mode(std::string_view text) {
  if (text == "single" || text == "SingleLabel" || text == "single-label") return PredMode::SingleLabel;
  if (text == "multi" || text == "MultiLabel" || text == "multi-label") return PredMode::MultiLabel;
  return std::nullopt;
}

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double precision, double recall) { return safe_div(2.0 * precision * recall, precision + recall); }

}  // namespace

PredEvalReport eval_strategy_predictions(std::span<const LabelSet> gold, std::span<const LabelSet> pred,
                                         PredMode mode) {
  if (gold.size() != pred.size())
    throw LengthMismatch("gold has " + std::to_string(gold.size()) + " items, predictions have " +
                         std::to_string(pred.size()));
  if (gold.empty()) throw LengthMismatch("no items to evaluate");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].empty() || pred[i].empty()) throw EmptyLabelSet("empty label set at item " + std::to_string(i));
    if (mode == PredMode::SingleLabel && (gold[i].size() > 1 || pred[i].size() > 1))
      throw BadRequest("single-label item " + std::to_string(i) + " carries several labels");
  }

  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> counts;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == pred[i]) ++exact;
    for (const auto& label : gold[i]) {
      auto& c = counts[label];
      if (pred[i].count(label)) ++c.tp;
      else ++c.fn;
    }
    for (const auto& label : pred[i])
      if (!gold[i].count(label)) ++counts[label].fp;
  }

  PredEvalReport report;
  report.mode = mode;
  report.item_count = gold.size();
  report.accuracy = static_cast<double>(exact) / static_cast<double>(gold.size());
  double tp = 0, fp = 0, fn = 0, f1_sum = 0;
  for (const auto& [label, c] : counts) {
    LabelScores s;
    s.precision = safe_div(c.tp, c.tp + c.fp);
    s.recall = safe_div(c.tp, c.tp + c.fn);
    s.f1 = f1_of(s.precision, s.recall);
    s.support = c.tp + c.fn;
    report.per_label[label] = s;
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    f1_sum += s.f1;
  }
  report.micro_precision = safe_div(tp, tp + fp);
  report.micro_recall = safe_div(tp, tp + fn);
  report.micro_f1 = f1_of(report.micro_precision, report.micro_recall);
  report.macro_f1 = safe_div(f1_sum, static_cast<double>(counts.size()));
  return report;
}

nlohmann::json pred_eval_to_json(const PredEvalReport& report) {
  nlohmann::json per_label = nlohmann::json::object();
  for (const auto& [label, s] : report.per_label)
    per_label[label] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  return {{"mode", to_string(report.mode)},
          {"item_count", report.item_count},
          {"accuracy", report.accuracy},
          {"micro_precision", report.micro_precision},
          {"micro_recall", report.micro_recall},
          {"micro_f1", report.micro_f1},
          {"macro_f1", report.macro_f1},
          {"per_label", per_label}};
}

std::string render_pred_eval(const PredEvalReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "mode %s, %zu items\nAcc %.4f  micro-F1 %.4f  macro-F1 %.4f\n",
                std::string(to_string(report.mode)).c_str(), report.item_count, report.accuracy, report.micro_f1,
                report.macro_f1);
  out << buf;
  std::size_t width = 5;
  for (const auto& [label, _] : report.per_label) width = std::max(width, label.size());
  out << "label" << std::string(width - 5 + 2, ' ') << "     P       R      F1  support\n";
  for (const auto& [label, s] : report.per_label) {
    std::snprintf(buf, sizeof buf, "%6.4f  %6.4f  %6.4f  %7zu\n", s.precision, s.recall, s.f1, s.support);
    out << label << std::string(width - label.size() + 2, ' ') << buf;
  }
  return out.str();
}

std::vector<LabelSet> parse_label_lines(std::istream& in) {
  std::vector<LabelSet> out;
  std::string line;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    LabelSet labels;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_string()) {
      labels.insert(j.get<std::string>());
    } else if (!j.is_discarded() && j.is_array()) {
      for (const auto& item : j) {
        if (!item.is_string()) throw SchemaError("label arrays must hold strings: " + line);
        labels.insert(item.get<std::string>());
      }
    } else {
      std::stringstream parts(line);
      std::string part;
      while (std::getline(parts, part, ';'))
        if (auto t = trim(part); !t.empty()) labels.insert(t);
    }
    out.push_back(std::move(labels));
  }
  return out;
}

}  // namespace scriptalign
