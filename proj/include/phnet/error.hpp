#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phnet {

enum class ErrorKind {
  dimension,
  structure,
  parametrization,
  convergence,
  configuration,
  numeric,
  divergence,
  verification,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::structure: return "structure";
    case ErrorKind::parametrization: return "parametrization";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::verification: return "verification";
  }
  return "unknown";
}

/// Base for every error raised by the library. The kind drives the CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  require(cond, ErrorKind::dimension, msg);
}

}  // namespace phnet
