#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slip {

enum class ErrorKind {
  ZeroVector,
  DimensionMismatch,
  NonPositiveTemperature,
  NonFinite,
  EmptySequence,
  KOutOfRange,
  LabelOutOfRange,
  ClassOutOfRange,
  EmptyDataset,
  MissingClass,
  InsufficientBags,
  RejectionExhausted,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  CorruptHeader,
  EmptyPromptSet,
  SchemaError,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace slip
