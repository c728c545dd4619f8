#include "cafe/errors.hpp"

namespace cafe {

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kBadMagic: return "bad magic";
    case ParseErrorKind::kBadVersion: return "unsupported version";
    case ParseErrorKind::kBadHeader: return "invalid header";
    case ParseErrorKind::kTruncated: return "truncated payload";
    case ParseErrorKind::kLabelOutOfRange: return "label out of range";
    case ParseErrorKind::kNonFinite: return "non-finite value";
    case ParseErrorKind::kTrailingBytes: return "trailing bytes";
  }
  return "parse error";
}

ParseError::ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) +
                         (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      offset_(offset) {}

}  // namespace cafe
