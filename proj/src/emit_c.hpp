#pragma once

#include <string>

#include "kernel.hpp"

namespace femopt {

// Renders the kernel as a self-contained C function named `fn`. Outputs come
// first (double*), then input tables (const double*), then constants (double),
// all in name order; pre-evaluated tables become static const arrays. Output
// arrays are expected zero-initialized by the caller.
std::string emit_c(const Kernel& k, const std::string& fn = "kernel");

}  // namespace femopt
