#pragma once

#include "kernel.hpp"

namespace femopt {

// Half-open spans of positions along one dimension.
using Spans = std::vector<std::pair<long, long>>;

// Per table, per dimension index name: spans where at least one entry with
// that coordinate differs from exact 0.0.
std::map<std::string, std::map<std::string, Spans>> detect_zero_blocks(const Kernel& k);

// Splits linear loops over the nonzero spans of the tables (and of the
// temporaries they feed), specializing each span's statements to the
// summands active there. Semantics are preserved exactly: skipped iterations
// only ever contribute products with an exact zero factor.
Kernel zero_skip(const Kernel& k);

}  // namespace femopt
