#include "scriptalign/prompt_assets.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scriptalign/errors.hpp"

#ifndef SCRIPTALIGN_ASSETS_DIR
#define SCRIPTALIGN_ASSETS_DIR "assets"
#endif

namespace scriptalign {

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    auto it = values.find(key);
    if (it == values.end()) throw BadRequest("template placeholder {{" + key + "}} has no value");
    out += it->second;
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& assets_dir) {
  const auto root = assets_dir / "prompts";
  if (!std::filesystem::is_directory(root)) throw IoError("prompt directory not found: " + root.string());
  PromptTemplates out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    auto key = std::filesystem::relative(entry.path(), root).replace_extension().generic_string();
    auto body = text.str();
    while (!body.empty() && body.back() == '\n') body.pop_back();
    out.templates_.emplace(std::move(key), std::move(body));
  }
  return out;
}

const std::string& PromptTemplates::get(std::string_view name) const {
  auto it = templates_.find(std::string(name));
  if (it == templates_.end()) throw IoError("missing prompt template " + std::string(name));
  return it->second;
}

std::filesystem::path default_assets_dir() {
  if (const char* env = std::getenv("SCRIPTALIGN_ASSETS"); env && *env) return env;
  return SCRIPTALIGN_ASSETS_DIR;
}

}  // namespace scriptalign
