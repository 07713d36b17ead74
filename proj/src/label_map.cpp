#include "scriptalign/label_map.hpp"

#include <algorithm>
#include <fstream>

#include "scriptalign/errors.hpp"
#include "scriptalign/text_similarity.hpp"

namespace scriptalign {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AskQuestion: return "AskQuestion";
    case StrategyKind::ReflectiveListening: return "ReflectiveListening";
    case StrategyKind::GiveInformation: return "GiveInformation";
    case StrategyKind::Other: return "Other";
  }
  return "Other";
}

std::optional<StrategyKind> parse_strategy_kind(std::string_view text) {
  for (auto kind : {StrategyKind::AskQuestion, StrategyKind::ReflectiveListening, StrategyKind::GiveInformation,
                    StrategyKind::Other}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

const LabelEntry* LabelMap::find_code(std::string_view code) const {
  for (const auto& entry : entries)
    if (entry.code == code) return &entry;
  return nullptr;
}

StrategyLabel LabelMap::fallback() const {
  for (const auto& entry : entries)
    if (entry.kind == StrategyKind::ReflectiveListening) return {entry.kind, entry.code};
  return {StrategyKind::ReflectiveListening, "reflective listening"};
}

LabelMap label_map_from_json(const nlohmann::json& j) {
  LabelMap map;
  try {
    map.name = j.value("name", std::string("custom"));
    map.multi_label = j.value("multi_label", false);
    for (const auto& label : j.at("labels")) {
      LabelEntry entry;
      entry.code = label.at("code").get<std::string>();
      const auto behavior = label.value("behavior", std::string("Other"));
      auto kind = parse_strategy_kind(behavior);
      if (!kind) throw UnknownLabelMap("label " + entry.code + " has unknown behavior " + behavior);
      entry.kind = *kind;
      entry.aliases = label.value("aliases", std::vector<std::string>{});
      map.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw UnknownLabelMap(std::string("malformed label map: ") + e.what());
  }
  if (map.entries.empty()) throw UnknownLabelMap("label map " + map.name + " has no labels");
  return map;
}

nlohmann::json label_map_to_json(const LabelMap& map) {
  auto labels = nlohmann::json::array();
  for (const auto& entry : map.entries)
    labels.push_back({{"code", entry.code}, {"behavior", to_string(entry.kind)}, {"aliases", entry.aliases}});
  return {{"name", map.name}, {"multi_label", map.multi_label}, {"labels", labels}};
}

LabelMap load_label_map(std::string_view config, const std::filesystem::path& assets_dir) {
  std::filesystem::path path;
  if (config == "core3" || config == "annomi" || config == "bimisc") {
    path = assets_dir / "labelmaps" / (std::string(config) + ".json");
  } else if (std::filesystem::is_regular_file(std::filesystem::path(config))) {
    path = std::filesystem::path(config);
  } else {
    throw UnknownLabelMap("unknown label map \"" + std::string(config) + "\"");
  }
  std::ifstream in(path);
  if (!in) throw UnknownLabelMap("cannot read label map " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UnknownLabelMap("label map " + path.string() + " is not valid JSON");
  return label_map_from_json(j);
}

namespace {

/// Position of the first contiguous occurrence of `needle` in `hay`.
std::optional<std::size_t> find_tokens(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return std::nullopt;
  auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end());
  if (it == hay.end()) return std::nullopt;
  return static_cast<std::size_t>(it - hay.begin());
}

std::optional<StrategyLabel> first_label_in(std::string_view segment, const LabelMap& map) {
  const auto tokens = token_sequence(segment);
  std::optional<StrategyLabel> best;
  std::size_t best_pos = 0;
  std::size_t best_len = 0;
  for (const auto& entry : map.entries) {
    auto candidates = entry.aliases;
    candidates.push_back(entry.code);
    for (const auto& alias : candidates) {
      const auto alias_tokens = token_sequence(alias);
      auto pos = find_tokens(tokens, alias_tokens);
      if (!pos) continue;
      if (!best || *pos < best_pos || (*pos == best_pos && alias_tokens.size() > best_len)) {
        best = StrategyLabel{entry.kind, entry.code};
        best_pos = *pos;
        best_len = alias_tokens.size();
      }
    }
  }
  return best;
}

}  // namespace

ParsedLabels parse_labels(std::string_view raw, const LabelMap& map) {
  ParsedLabels out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find_first_of(";,/|\n", start);
    if (end == std::string_view::npos) end = raw.size();
    if (auto label = first_label_in(raw.substr(start, end - start), map)) {
      if (std::find(out.labels.begin(), out.labels.end(), *label) == out.labels.end()) out.labels.push_back(*label);
      if (!map.multi_label) break;
    }
    start = end + 1;
  }
  if (out.labels.empty()) {
    out.labels.push_back(map.fallback());
    out.warning = true;
  }
  return out;
}

}  // namespace scriptalign
