#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stom {

enum class ErrorKind {
  InvalidHypothesisSet,
  InvalidBelief,
  LengthMismatch,
  NegativeWeight,
  ZeroMass,
  SingletonSpace,
  InvalidObservation,
  PreconditionViolation,
  ProviderFailure,
  MissingHypothesisScore,
  ParseError,
  ConfigError,
  Timeout,
  TransportError,
  ApiError,
  RetriesExhausted,
  ReplayMiss,
  NotApplicable,
  VerificationFailure,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures that originate from talking to an LLM endpoint.
  bool is_gateway_error() const noexcept {
    return kind_ == ErrorKind::Timeout || kind_ == ErrorKind::TransportError ||
           kind_ == ErrorKind::ApiError || kind_ == ErrorKind::RetriesExhausted ||
           kind_ == ErrorKind::ReplayMiss;
  }

 private:
  ErrorKind kind_;
};

}  // namespace stom
