#include "scriptalign/errors.hpp"

namespace scriptalign {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax: return "SYNTAX_ERROR";
    case ErrorCode::Schema: return "SCHEMA_ERROR";
    case ErrorCode::Structure: return "STRUCTURE_ERROR";
    case ErrorCode::UnknownTopic: return "UNKNOWN_TOPIC";
    case ErrorCode::SessionComplete: return "SESSION_COMPLETE";
    case ErrorCode::InvalidOption: return "INVALID_OPTION";
    case ErrorCode::Network: return "NETWORK_ERROR";
    case ErrorCode::ReplayMiss: return "REPLAY_MISS";
    case ErrorCode::BudgetExceeded: return "BUDGET_EXCEEDED";
    case ErrorCode::Collision: return "COLLISION";
    case ErrorCode::PromptTooLarge: return "PROMPT_TOO_LARGE";
    case ErrorCode::WrongStrategy: return "WRONG_STRATEGY";
    case ErrorCode::UnknownLabelMap: return "UNKNOWN_LABEL_MAP";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::EmptyLabelSet: return "EMPTY_LABEL_SET";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::Conflict: return "CONFLICT";
    case ErrorCode::Range: return "RANGE_ERROR";
    case ErrorCode::Busy: return "BUSY";
    case ErrorCode::UnknownBackend: return "UNKNOWN_BACKEND";
    case ErrorCode::UnknownInstrument: return "UNKNOWN_INSTRUMENT";
    case ErrorCode::BadRequest: return "BAD_REQUEST";
    case ErrorCode::Io: return "IO_ERROR";
  }
  return "ERROR";
}

}  // namespace scriptalign
