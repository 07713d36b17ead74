#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "scriptalign/errors.hpp"
#include "scriptalign/session_service.hpp"

namespace httplib {
class Server;
}

namespace scriptalign {

int http_status_for(ErrorCode code);

/// Installs the /api routes, and serves `static_dir` under / when given.
///
///   POST /api/sessions                  {condition, topic_id, backend}
///   POST /api/sessions/{id}/messages    {text?, option_id?}
///   GET  /api/sessions/{id}
///   POST /api/sessions/{id}/survey      {instrument_id, answers: [{item_id, likert}]}
///   GET  /api/topics
///   GET  /api/surveys
///   GET  /api/metrics?condition=...
///   GET  /api/healthz
///
/// Failures answer {code, message, retriable}.
void mount_api(httplib::Server& server, SessionService& service,
               const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace scriptalign
