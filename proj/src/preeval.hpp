#pragma once

#include "kernel.hpp"

namespace femopt {

// One summand of an innermost statement of the primary (reduction) nest.
struct Monomial {
  size_t index = 0;       // position in split order, kernel-wide
  std::string stmt_lhs;   // owning statement, by lhs key
  ExprPtr expr;           // normalized monomial
  bool separable = true;
  std::string reject;     // non-empty when pre-evaluation is impossible
  unsigned n = 0;         // distinct reduction-level basis symbols in mixed sums
  unsigned kmix = 0;      // sum factors mixing element-level and reduction content
  unsigned long long iota = 0;  // growth factor C(n + kmix - 1, kmix)
  // Element-level/constant part and reduction part of each expanded term,
  // grouped by the canonical gamma product. rho * iota entries.
  std::vector<std::pair<ExprPtr, ExprPtr>> groups;
};

std::vector<Monomial> split_monomials(const Validated& v);

// Number of distinct degree-k monomials over n symbols: C(n + k - 1, k).
unsigned long long increase_factor(unsigned n, unsigned kmix);

// Sums `tau` over the reduction loop (ascending, left fold) into a numeric
// table subscripted by whichever linear indices it uses.
Table symbolic_reduce(const ExprPtr& tau, const Validated& v);

struct PreevalResult {
  Kernel k;
  unsigned long long table_bytes = 0;  // new tables, after value deduplication
};

// Replaces the chosen monomials (indices into split_monomials order) with
// reads of pre-evaluated tables in a fresh multilinear nest beside the
// reduction loop; removes the reduction loop if it empties. `structural`
// skips the numeric summation (tables filled with zeros, no deduplication) —
// used by the cost model, where only the shape matters.
PreevalResult preevaluate(const Validated& v, const std::vector<size_t>& chosen,
                          bool structural = false);

}  // namespace femopt
