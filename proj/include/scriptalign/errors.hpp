#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scriptalign {

enum class ErrorCode {
  Syntax,
  Schema,
  Structure,
  UnknownTopic,
  SessionComplete,
  InvalidOption,
  Network,
  ReplayMiss,
  BudgetExceeded,
  Collision,
  PromptTooLarge,
  WrongStrategy,
  UnknownLabelMap,
  LengthMismatch,
  EmptyLabelSet,
  NotFound,
  Conflict,
  Range,
  Busy,
  UnknownBackend,
  UnknownInstrument,
  BadRequest,
  Io,
};

/// Stable wire name used in HTTP error bodies and CLI output.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, bool retriable = false)
      : std::runtime_error(message), code_(code), retriable_(retriable) {}

  ErrorCode code() const noexcept { return code_; }
  bool retriable() const noexcept { return retriable_; }

 private:
  ErrorCode code_;
  bool retriable_;
};

template <ErrorCode C, bool Retriable = false>
class TypedError : public Error {
 public:
  explicit TypedError(const std::string& message) : Error(C, message, Retriable) {}
};

using SyntaxError = TypedError<ErrorCode::Syntax>;
using SchemaError = TypedError<ErrorCode::Schema>;
using StructureError = TypedError<ErrorCode::Structure>;
using UnknownTopic = TypedError<ErrorCode::UnknownTopic>;
using SessionComplete = TypedError<ErrorCode::SessionComplete>;
using InvalidOption = TypedError<ErrorCode::InvalidOption>;
using NetworkError = TypedError<ErrorCode::Network, true>;
using ReplayMiss = TypedError<ErrorCode::ReplayMiss>;
using BudgetExceeded = TypedError<ErrorCode::BudgetExceeded>;
using CollisionError = TypedError<ErrorCode::Collision>;
using PromptTooLarge = TypedError<ErrorCode::PromptTooLarge>;
using WrongStrategy = TypedError<ErrorCode::WrongStrategy>;
using UnknownLabelMap = TypedError<ErrorCode::UnknownLabelMap>;
using LengthMismatch = TypedError<ErrorCode::LengthMismatch>;
using EmptyLabelSet = TypedError<ErrorCode::EmptyLabelSet>;
using NotFound = TypedError<ErrorCode::NotFound>;
using Conflict = TypedError<ErrorCode::Conflict>;
using RangeError = TypedError<ErrorCode::Range>;
using Busy = TypedError<ErrorCode::Busy, true>;
using UnknownBackend = TypedError<ErrorCode::UnknownBackend>;
using UnknownInstrument = TypedError<ErrorCode::UnknownInstrument>;
using BadRequest = TypedError<ErrorCode::BadRequest>;
using IoError = TypedError<ErrorCode::Io>;

}  // namespace scriptalign
