#include "scriptalign/http_api.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

namespace scriptalign {

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownTopic:
    case ErrorCode::UnknownInstrument:
      return 404;
    case ErrorCode::SessionComplete:
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::Busy:
      return 429;
    case ErrorCode::Network:
      return 502;
    case ErrorCode::Syntax:
    case ErrorCode::Schema:
    case ErrorCode::InvalidOption:
    case ErrorCode::Range:
    case ErrorCode::BadRequest:
    case ErrorCode::UnknownBackend:
    case ErrorCode::UnknownLabelMap:
    case ErrorCode::LengthMismatch:
    case ErrorCode::EmptyLabelSet:
      return 400;
    default:
      return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                bool retriable) {
  send_json(res, status, {{"code", code}, {"message", message}, {"retriable", retriable}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw BadRequest("request body must be a JSON object");
  return j;
}

std::string string_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw BadRequest(std::string("missing string field \"") + key + "\"");
  return it->get<std::string>();
}

/// Runs a handler, turning exceptions into the error body.
template <class F>
httplib::Server::Handler guarded(F handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), error_code_name(e.code()), e.what(), e.retriable());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, error_code_name(ErrorCode::BadRequest), e.what(), false);
    } catch (const std::exception& e) {
      send_error(res, 500, "INTERNAL", e.what(), false);
    }
  };
}

}  // namespace

void mount_api(httplib::Server& server, SessionService& service, const std::optional<std::filesystem::path>& static_dir) {
  server.Get("/api/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"status", "ok"}});
             }));

  server.Get("/api/topics", guarded([&service](const httplib::Request&, httplib::Response& res) {
               nlohmann::json topics = nlohmann::json::array();
               for (const auto& [id, script] : service.library().scripts())
                 topics.push_back({{"topic_id", id},
                                   {"title", script.title()},
                                   {"framework", to_string(script.framework())}});
               send_json(res, 200, {{"topics", topics}, {"backends", service.backend_names()}});
             }));

  server.Get("/api/surveys", guarded([&service](const httplib::Request&, httplib::Response& res) {
               nlohmann::json out = nlohmann::json::array();
               for (const auto& [_, instrument] : service.instruments()) out.push_back(instrument_to_json(instrument));
               send_json(res, 200, {{"instruments", out}});
             }));

  server.Post("/api/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                auto body = parse_body(req);
                auto condition = parse_condition(string_field(body, "condition"));
                if (!condition) throw BadRequest("unknown condition " + body["condition"].dump());
                std::string backend = body.value("backend", std::string(kNoBackend));
                auto created = service.create_session(*condition, string_field(body, "topic_id"), backend);
                send_json(res, 201, {{"session_id", created.session_id}, {"turn", created.turn}});
              }));

  server.Post(R"(/api/sessions/([^/]+)/messages)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                auto body = parse_body(req);
                UserInput input;
                if (auto it = body.find("option_id"); it != body.end() && !it->is_null())
                  input.option_id = it->get<std::string>();
                if (auto it = body.find("text"); it != body.end() && !it->is_null()) input.text = it->get<std::string>();
                if (!input.option_id && input.text.empty()) throw BadRequest("send either text or option_id");
                auto turn = service.post_message(req.matches[1], input);
                send_json(res, 200, {{"turn", turn}});
              }));

  server.Get(R"(/api/sessions/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, session_view_to_json(service.get_session(req.matches[1])));
             }));

  server.Post(R"(/api/sessions/([^/]+)/survey)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                auto body = parse_body(req);
                SurveyResponse response;
                response.session_id = req.matches[1];
                response.instrument_id = string_field(body, "instrument_id");
                auto answers = body.find("answers");
                if (answers == body.end() || !answers->is_array()) throw BadRequest("answers must be a list");
                for (const auto& a : *answers) {
                  if (!a.is_object() || !a.contains("item_id") || !a.contains("likert") || !a.at("likert").is_number_integer())
                    throw BadRequest("each answer needs item_id and an integer likert value");
                  response.answers.push_back({a.at("item_id").get<std::string>(), a.at("likert").get<int>()});
                }
                service.submit_survey(response);
                send_json(res, 201, {{"status", "recorded"}});
              }));

  server.Get("/api/metrics", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               std::optional<Condition> filter;
               if (req.has_param("condition")) {
                 filter = parse_condition(req.get_param_value("condition"));
                 if (!filter) throw BadRequest("unknown condition \"" + req.get_param_value("condition") + "\"");
               }
               auto transcripts = service.export_transcripts(filter);
               MetricsOptions options;
               options.match_threshold = service.engine_config().match_threshold;
               options.branch_threshold = service.engine_config().branch_threshold;
               nlohmann::json by_condition = nlohmann::json::object();
               for (const auto& [condition, report] : compute_metrics_by_condition(transcripts, service.library(), options))
                 by_condition[std::string(to_string(condition))] = metrics_report_to_json(report);
               send_json(res, 200, {{"conditions", by_condition}});
             }));

  if (static_dir && std::filesystem::is_directory(*static_dir)) server.set_mount_point("/", static_dir->string());
}

}  // namespace scriptalign
