#pragma once

#include <stdexcept>
#include <string>

namespace mixorder {

// Precondition / argument violations. The CLI maps these to exit code 1.
struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failures (degenerate parameters, non-convergence, underflow).
// The CLI maps these to exit code 2.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// EM component collapse; consumed by the restart loop.
struct em_collapse : numerical_error {
  using numerical_error::numerical_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_input(msg);
}

}  // namespace mixorder
