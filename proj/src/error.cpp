#include "recg/error.hpp"

namespace recg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse-error";
    case ErrorCode::CorpusEmpty: return "corpus-empty";
    case ErrorCode::Io: return "io-error";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::BadVersion: return "version-mismatch";
    case ErrorCode::ZeroDim: return "zero-dim";
    case ErrorCode::CountMismatch: return "count-mismatch";
    case ErrorCode::PayloadSizeMismatch: return "payload-size-mismatch";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::CrcMismatch: return "crc-mismatch";
    case ErrorCode::UnboundItems: return "unbound-items";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::EmptyHistory: return "empty-history";
    case ErrorCode::EmptyGroup: return "empty-group";
    case ErrorCode::TooFewDomains: return "too-few-domains";
    case ErrorCode::TooFewPoints: return "too-few-points";
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::DomainOverlap: return "domain-overlap";
    case ErrorCode::FingerprintMismatch: return "fingerprint-mismatch";
    case ErrorCode::Divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace recg
