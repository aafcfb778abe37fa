#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace recg {

enum class ErrorCode {
  Parse,
  CorpusEmpty,
  Io,
  BadMagic,
  BadVersion,
  ZeroDim,
  CountMismatch,
  PayloadSizeMismatch,
  NonFinite,
  CrcMismatch,
  UnboundItems,
  DimensionMismatch,
  EmptyHistory,
  EmptyGroup,
  TooFewDomains,
  TooFewPoints,
  InvalidConfig,
  DomainOverlap,
  FingerprintMismatch,
  Divergence,
};

std::string_view to_string(ErrorCode code);

/// Library error. `details` carries structured payloads such as the list of
/// unbound item ids.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::vector<std::string> details = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace recg
