#include "scoreopt/error.hpp"

namespace scoreopt {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::degenerate_kernel: return "degenerate kernel";
    case ErrorCode::singular_scale: return "singular scale";
    case ErrorCode::empty_feasible: return "no feasible samples";
    case ErrorCode::divergent: return "divergent training";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::config: return "configuration error";
    case ErrorCode::io: return "i/o error";
  }
  return "unknown error";
}

}  // namespace scoreopt
