#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmm {

enum class ErrorKind {
  invalid_input,
  dimension_mismatch,
  singular_gram,
  singular_curvature,
  diverged,
  domain,
  subproblem,
  degenerate_layer,
  psd_violation,
  missing_field,
  method_switch,
  insufficient_data,
  balance_failure,
  format,
  length,
  consistency,
  io,
  config,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pmm
