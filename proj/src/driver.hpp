#pragma once

#include "json.hpp"
#include "kernel.hpp"

namespace femopt {

struct DriverOptions {
  unsigned long long memory_limit = 262144;  // bytes of pre-evaluated tables
  bool enable_preeval = true;
  bool enable_zeroskip = true;
  bool trace = false;  // record per-pass details in the report
};

struct OptimizeResult {
  Kernel k;
  nlohmann::json report;
};

// Whole pipeline: triage each monomial between pre-evaluation and sharing
// elimination, search the feasible bipartitions of the pre-evaluable set for
// the cheapest plan, apply it, then run sharing elimination and zero-block
// loop splitting. The result never costs more operations than the input.
OptimizeResult optimize(const Kernel& input, const DriverOptions& opt = {});

// Re-runs the pipeline on `seeds` randomized copies of the kernel and checks
// the optimized outputs against the interpreter, at relative tolerance `tol`.
// Returns the worst error observed; throws only on structural failure.
double verify(const Kernel& input, const DriverOptions& opt, int seeds, double tol);

}  // namespace femopt
