#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scoreopt {

enum class ErrorCode {
  invalid_argument = 1,
  degenerate_kernel,
  singular_scale,
  empty_feasible,
  divergent,
  non_finite,
  config,
  io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the optimizer loop; carries the scale index at which the run stopped.
class RunAborted : public Error {
 public:
  RunAborted(ErrorCode code, std::size_t scale, const std::string& what)
      : Error(code, what), scale_(scale) {}
  std::size_t scale() const noexcept { return scale_; }

 private:
  std::size_t scale_;
};

}  // namespace scoreopt
