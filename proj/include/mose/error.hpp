#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mose {

enum class ErrorKind {
  kParse,
  kVocabulary,
  kFormat,
  kConfig,
  kState,
  kShape,
  kIndex,
  kNumeric,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define MOSE_DECLARE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

MOSE_DECLARE_ERROR(ParseError, kParse)
MOSE_DECLARE_ERROR(VocabularyError, kVocabulary)
MOSE_DECLARE_ERROR(FormatError, kFormat)
MOSE_DECLARE_ERROR(ConfigError, kConfig)
MOSE_DECLARE_ERROR(StateError, kState)
MOSE_DECLARE_ERROR(ShapeError, kShape)
MOSE_DECLARE_ERROR(IndexError, kIndex)
MOSE_DECLARE_ERROR(NumericError, kNumeric)

#undef MOSE_DECLARE_ERROR

// CLI exit code: 1 usage/state, 2 data/format, 3 numeric failure.
int exit_code(ErrorKind kind);

}  // namespace mose
