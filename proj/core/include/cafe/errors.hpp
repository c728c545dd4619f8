#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cafe {

/// Bad argument or shape mismatch at an API boundary.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data violates a documented invariant (non-finite value, label out of range, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite loss, activation or gradient appeared during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A cached forward result was used with a network or shape it does not belong to.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ParseErrorKind {
  kBadMagic,
  kBadVersion,
  kBadHeader,
  kTruncated,
  kLabelOutOfRange,
  kNonFinite,
  kTrailingBytes,
};

const char* to_string(ParseErrorKind kind);

/// Structured failure while decoding a binary file. `offset()` is the byte
/// position at which decoding stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail);

  ParseErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  ParseErrorKind kind_;
  std::uint64_t offset_;
};

}  // namespace cafe
