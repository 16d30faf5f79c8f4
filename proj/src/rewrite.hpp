#pragma once

#include "kernel.hpp"

namespace femopt {

// Distributes products over sums so every occurrence of a target symbol name
// ends up multiplying an explicit coefficient, then groups the resulting
// terms by their target-atom product (coefficients kept unfolded, in order of
// appearance). Throws NonDistributable when a target sits under a Div
// denominator or inside Call arguments.
ExprPtr expand(const ExprPtr& e, const std::set<std::string>& targets);

// Distributes any sum spanning two or more of the given linear indices over
// its co-factors, yielding a sum of monomials each factorable per index.
ExprPtr normalize_sum_of_monomials(const ExprPtr& e, const std::set<std::string>& lin,
                                   const std::map<std::string, std::set<std::string>>& extra);

// Inverse direction on a sum of products: factors each target symbol out of
// the summands that contain it (only when it appears in at least two),
// recursing into coefficients with the remaining targets. Target order is
// the factorization order.
ExprPtr factorize(const ExprPtr& e, const std::vector<std::string>& targets);

// Where a definition of an expression with loop dependences `dep` belongs:
// descend the enclosing chain while its indices are needed, then open fresh
// loops for whichever needed indices remain (these become the temporary's
// subscripts).
struct PlacementResult {
  std::vector<Item>* block = nullptr;   // insertion block
  size_t pos = 0;                       // insert before this item
  std::vector<std::string> array_dims;  // indices needing new loops
  bool full_descent = false;            // stayed inside the innermost loop
};
PlacementResult placement_for(Kernel& k, const std::vector<Loop*>& enclosing,
                              const std::set<std::string>& dep);

struct HoistResult {
  ExprPtr replacement;          // symbol to use at the original site
  Statement* stmt = nullptr;    // definition (null when an existing one was reused)
  std::vector<Loop*> chain;     // loops enclosing the definition
};

// Defines `value` as a temporary at its natural placement, reusing an
// adjacent generated loop and an existing temporary for the same value at
// the same spot.
class Hoister {
 public:
  explicit Hoister(Kernel& k, std::string prefix = "t");
  HoistResult hoist(const std::vector<Loop*>& enclosing, const ExprPtr& value,
                    const std::set<std::string>& dep);
  const std::set<std::string>& created() const { return created_; }

 private:
  Kernel& k_;
  std::string prefix_;
  int counter_ = 0;
  std::set<std::string> created_;
  std::set<const Loop*> created_loops_;
  std::set<std::string> used_names_;
  // (owning block identity, value key) -> replacement symbol
  std::map<std::pair<const void*, std::string>, ExprPtr> cache_;
};

// Generalized code motion: hoists every maximal subexpression that is
// invariant in at least one of its enclosing loops, recursively, never
// creating a temporary subscripted by an order-free loop index.
Kernel code_motion(const Kernel& k);

}  // namespace femopt
