#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace gmmem {

enum class ErrorKind {
  invalid_spec,
  dimension_mismatch,
  invalid_argument,
  empty_component,
  cluster_too_small,
  empty_batch,
  missing_labels,
  parse_error,
  io_error,
  config_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_spec: return "invalid_spec";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::empty_component: return "empty_component";
    case ErrorKind::cluster_too_small: return "cluster_too_small";
    case ErrorKind::empty_batch: return "empty_batch";
    case ErrorKind::missing_labels: return "missing_labels";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::io_error: return "io_error";
    case ErrorKind::config_error: return "config_error";
  }
  return "unknown";
}

// All library failures are reported through this type. `component` is set
// when the failure can be pinned to one mixture component.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> component = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        component_(component) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> component() const noexcept { return component_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> component_;
};

}  // namespace gmmem
