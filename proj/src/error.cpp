#include "slip/error.hpp"

namespace slip {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::ClassOutOfRange: return "ClassOutOfRange";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::InsufficientBags: return "InsufficientBags";
    case ErrorKind::RejectionExhausted: return "RejectionExhausted";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::EmptyPromptSet: return "EmptyPromptSet";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace slip
