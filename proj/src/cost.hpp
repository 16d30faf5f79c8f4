#pragma once

#include "preeval.hpp"

namespace femopt {

// Kernel reduced to the given monomials (split_monomials order): every other
// summand is dropped, emptied statements and loops removed, dead element-level
// code eliminated. Loop classes are re-inferred.
Kernel strip_to_monomials(const Validated& v, const std::vector<size_t>& keep);

// Operation count the kernel would have if the given monomials were rewritten
// by sharing elimination alone (dry run on a stripped clone).
unsigned long long theta_se(const Validated& v, const std::vector<size_t>& keep);

struct ThetaPre {
  bool rejected = false;
  std::string reason;
  unsigned long long flops = 0;
  unsigned long long table_bytes = 0;  // no deduplication: an upper bound
};

// Operation count and table storage if the given monomials were pre-evaluated
// (structural dry run: no numeric summation). Rejected when a monomial is not
// separable or its growth factor reaches the reduction extent.
ThetaPre theta_pre(const Validated& v, const std::vector<size_t>& chosen);

// Bytes of temporaries and pre-evaluated tables the kernel holds live.
// Throws InconsistentLayout if a temporary is subscripted by an order-free
// loop index.
unsigned long long memory_footprint(const Kernel& k);

}  // namespace femopt
