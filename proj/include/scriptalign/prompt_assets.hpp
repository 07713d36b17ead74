#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace scriptalign {

/// Replaces every `{{name}}` placeholder. Throws BadRequest for a placeholder
/// without a value, so template edits cannot silently drop content.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Prompt templates keyed by their path below `prompts/` without extension,
/// e.g. "sag/system" or "ssag/predict".
class PromptTemplates {
 public:
  /// Reads every *.txt under `<assets_dir>/prompts`. Throws IoError.
  static PromptTemplates load(const std::filesystem::path& assets_dir);

  const std::string& get(std::string_view name) const;
  bool contains(std::string_view name) const { return templates_.count(std::string(name)) > 0; }

 private:
  std::map<std::string, std::string> templates_;
};

/// SCRIPTALIGN_ASSETS when set, else the assets directory of the source tree.
std::filesystem::path default_assets_dir();

}  // namespace scriptalign
