#include "scriptalign/bot_turn.hpp"

namespace scriptalign {

void to_json(nlohmann::json& j, const TurnOption& option) {
  j = {{"option_id", option.option_id}, {"label", option.label}};
}

void from_json(const nlohmann::json& j, TurnOption& option) {
  j.at("option_id").get_to(option.option_id);
  j.at("label").get_to(option.label);
}

void to_json(nlohmann::json& j, const BotTurn& turn) {
  j = {{"texts", turn.texts}, {"options", turn.options}, {"done", turn.done}};
  auto matched = nlohmann::json::array();
  for (const auto& m : turn.matched_nodes) matched.push_back(m ? nlohmann::json(*m) : nlohmann::json());
  j["matched_nodes"] = std::move(matched);
  j["strategy"] = turn.strategy ? nlohmann::json(*turn.strategy) : nlohmann::json();
  j["resolved_option"] = turn.resolved_option ? nlohmann::json(*turn.resolved_option) : nlohmann::json();
}

void from_json(const nlohmann::json& j, BotTurn& turn) {
  j.at("texts").get_to(turn.texts);
  j.at("options").get_to(turn.options);
  j.at("done").get_to(turn.done);
  turn.matched_nodes.clear();
  if (auto it = j.find("matched_nodes"); it != j.end()) {
    for (const auto& m : *it) {
      turn.matched_nodes.push_back(m.is_null() ? std::nullopt : std::optional<std::string>(m.get<std::string>()));
    }
  }
  turn.strategy.reset();
  if (auto it = j.find("strategy"); it != j.end() && !it->is_null()) turn.strategy = it->get<std::string>();
  turn.resolved_option.reset();
  if (auto it = j.find("resolved_option"); it != j.end() && !it->is_null())
    turn.resolved_option = it->get<std::string>();
}

void to_json(nlohmann::json& j, const UserInput& input) {
  j = {{"text", input.text}};
  j["option_id"] = input.option_id ? nlohmann::json(*input.option_id) : nlohmann::json();
}

void from_json(const nlohmann::json& j, UserInput& input) {
  input.text = j.value("text", std::string());
  input.option_id.reset();
  if (auto it = j.find("option_id"); it != j.end() && !it->is_null()) input.option_id = it->get<std::string>();
}

}  // namespace scriptalign
