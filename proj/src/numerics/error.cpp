#include "pmm/numerics/error.hpp"

namespace pmm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::singular_gram: return "singular gram";
    case ErrorKind::singular_curvature: return "singular curvature";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::subproblem: return "subproblem";
    case ErrorKind::degenerate_layer: return "degenerate layer";
    case ErrorKind::psd_violation: return "psd violation";
    case ErrorKind::missing_field: return "missing field";
    case ErrorKind::method_switch: return "method switch";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::balance_failure: return "balance failure";
    case ErrorKind::format: return "format error";
    case ErrorKind::length: return "length error";
    case ErrorKind::consistency: return "consistency error";
    case ErrorKind::io: return "io error";
    case ErrorKind::config: return "config error";
  }
  return "error";
}

}  // namespace pmm
