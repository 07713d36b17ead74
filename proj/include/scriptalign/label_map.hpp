#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace scriptalign {

enum class StrategyKind { AskQuestion, ReflectiveListening, GiveInformation, Other };

std::string_view to_string(StrategyKind kind);
std::optional<StrategyKind> parse_strategy_kind(std::string_view text);

/// A therapist-behaviour code. `code` is the label map's code; for the three
/// core behaviours it only records which code produced the label.
struct StrategyLabel {
  StrategyKind kind = StrategyKind::ReflectiveListening;
  std::string code;

  bool operator==(const StrategyLabel&) const = default;
};

struct LabelEntry {
  std::string code;
  StrategyKind kind = StrategyKind::Other;
  std::vector<std::string> aliases;
};

/// Code <-> behaviour mapping plus the aliases the lenient parser accepts.
struct LabelMap {
  std::string name;
  bool multi_label = false;
  std::vector<LabelEntry> entries;

  const LabelEntry* find_code(std::string_view code) const;
  /// Label used when a prediction cannot be parsed.
  StrategyLabel fallback() const;
};

LabelMap label_map_from_json(const nlohmann::json& j);
nlohmann::json label_map_to_json(const LabelMap& map);

/// `config` is a known map name ("core3", "annomi", "bimisc") resolved under
/// `<assets_dir>/labelmaps`, or a path to a custom map file.
/// Throws UnknownLabelMap.
LabelMap load_label_map(std::string_view config, const std::filesystem::path& assets_dir);

struct ParsedLabels {
  std::vector<StrategyLabel> labels;
  bool warning = false;
};

/// Case-insensitive, alias-based parse. Single-label maps keep the first
/// recognized label, multi-label maps keep every recognized label (segments
/// split on ; , / | and newlines). Falls back to reflective listening with
/// `warning` set when nothing is recognized.
ParsedLabels parse_labels(std::string_view raw, const LabelMap& map);

}  // namespace scriptalign
