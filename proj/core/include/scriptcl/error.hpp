#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scriptcl {

// Every failure raised by the library derives from Error; `kind()` is the
// stable machine-readable name used in CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SCRIPTCL_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

// script_data
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& reason)
      : Error("MalformedRecord", "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};
SCRIPTCL_DEFINE_ERROR(UnknownCharacter);
SCRIPTCL_DEFINE_ERROR(DanglingSummaryRef);
SCRIPTCL_DEFINE_ERROR(InvalidSpec);
SCRIPTCL_DEFINE_ERROR(IoError);

// encoding
SCRIPTCL_DEFINE_ERROR(TooLong);
SCRIPTCL_DEFINE_ERROR(InvalidInput);
SCRIPTCL_DEFINE_ERROR(UnresolvableSpan);
SCRIPTCL_DEFINE_ERROR(EmptyMask);
SCRIPTCL_DEFINE_ERROR(EmptyInput);
SCRIPTCL_DEFINE_ERROR(DimensionMismatch);

// objectives
SCRIPTCL_DEFINE_ERROR(ZeroVector);
SCRIPTCL_DEFINE_ERROR(EmptyPairSet);
SCRIPTCL_DEFINE_ERROR(EmptyBatch);
SCRIPTCL_DEFINE_ERROR(LabelOutOfRange);

// trainer
SCRIPTCL_DEFINE_ERROR(NoActiveLoss);
SCRIPTCL_DEFINE_ERROR(InvalidConfig);
SCRIPTCL_DEFINE_ERROR(CheckpointWriteFailure);
SCRIPTCL_DEFINE_ERROR(IncompatibleCheckpoint);
SCRIPTCL_DEFINE_ERROR(MissingPrediction);

// coref_metrics
SCRIPTCL_DEFINE_ERROR(MentionUniverseMismatch);
SCRIPTCL_DEFINE_ERROR(TooFewMentions);
SCRIPTCL_DEFINE_ERROR(LengthMismatch);
SCRIPTCL_DEFINE_ERROR(TooLarge);

#undef SCRIPTCL_DEFINE_ERROR

}  // namespace scriptcl
