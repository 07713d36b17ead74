#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace scriptalign {

struct TurnOption {
  std::string option_id;
  std::string label;

  bool operator==(const TurnOption&) const = default;
};

/// What the bot says in one step. Consecutive bot utterances are separate
/// bubbles in `texts`; `options` are buttons for the next user move.
struct BotTurn {
  std::vector<std::string> texts;
  std::vector<TurnOption> options;
  bool done = false;
  /// Per-bubble script node the text was matched to (engines fill what they know).
  std::vector<std::optional<std::string>> matched_nodes;
  /// Strategy label that produced this turn (SSAG only).
  std::optional<std::string> strategy;
  /// Branch the engine read from the user's message in this step, if any.
  std::optional<std::string> resolved_option;

  bool operator==(const BotTurn&) const = default;
};

/// What the user sent: an option click or free text.
struct UserInput {
  std::optional<std::string> option_id;
  std::string text;

  static UserInput option(std::string id) { return UserInput{std::move(id), {}}; }
  static UserInput free_text(std::string text) { return UserInput{std::nullopt, std::move(text)}; }
};

void to_json(nlohmann::json& j, const TurnOption& option);
void from_json(const nlohmann::json& j, TurnOption& option);
void to_json(nlohmann::json& j, const BotTurn& turn);
void from_json(const nlohmann::json& j, BotTurn& turn);
void to_json(nlohmann::json& j, const UserInput& input);
void from_json(const nlohmann::json& j, UserInput& input);

}  // namespace scriptalign
