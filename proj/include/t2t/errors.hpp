#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace t2t {

enum class ErrorKind {
  kDimension,
  kShape,
  kParameter,
  kData,
  kIndex,
  kCapacity,
  kConfiguration,
};

std::string_view to_string(ErrorKind kind);

// All library failures derive from Error so callers (the CLI in particular) can
// map them to exit codes and a single machine-parseable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define T2T_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

T2T_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
T2T_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
T2T_DEFINE_ERROR(ParameterError, ErrorKind::kParameter)
T2T_DEFINE_ERROR(DataError, ErrorKind::kData)
T2T_DEFINE_ERROR(IndexError, ErrorKind::kIndex)
T2T_DEFINE_ERROR(CapacityError, ErrorKind::kCapacity)
T2T_DEFINE_ERROR(ConfigError, ErrorKind::kConfiguration)

#undef T2T_DEFINE_ERROR

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kData: return "data";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kConfiguration: return "configuration";
  }
  return "unknown";
}

}  // namespace t2t
