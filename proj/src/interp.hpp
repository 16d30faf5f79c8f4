#pragma once

#include "kernel.hpp"

namespace femopt {

// Executes the kernel with its table/constant values; outputs start at zero.
// Additions fold left over the stored operand order, so two structurally
// identical kernels produce bitwise identical results.
std::map<std::string, std::vector<double>> interpret(const Kernel& k);

// Copy of `k` with every input table entry and constant redrawn from the
// given seed (uniform in [0.25, 1.25]); pre-evaluated tables are dropped so
// callers re-derive them.
Kernel randomized(const Kernel& k, unsigned long long seed);

// max |a-b| / max(1, |a|, |b|) over the union of both output sets.
double max_rel_error(const std::map<std::string, std::vector<double>>& a,
                     const std::map<std::string, std::vector<double>>& b);

}  // namespace femopt
