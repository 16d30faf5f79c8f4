#pragma once

#include <optional>

#include "expr.hpp"

namespace femopt {

enum class LoopClass { OrderFree, Reduction, Linear, Plain };

std::string loop_class_name(LoopClass c);

struct Table {
  std::vector<std::string> dims;  // loop indices naming each dimension
  std::vector<double> values;     // row-major
  enum class Prov { Input, Preevaluated } prov = Prov::Input;
};

struct Statement {
  ExprPtr lhs;       // Sym (possibly scalar)
  bool aug = false;  // true: accumulation (+=), false: assignment (=)
  ExprPtr rhs;
};

struct Loop;

// Exactly one of stmt/loop is set.
struct Item {
  std::shared_ptr<Statement> stmt;
  std::shared_ptr<Loop> loop;
};

struct Loop {
  std::string index;
  LoopClass cls = LoopClass::Plain;
  bool declared = false;  // class came from the input, not inference
  long begin = 0;
  long end = 0;
  std::vector<Item> body;
};

struct Kernel {
  std::map<std::string, long> extents;  // index -> extent
  // Loop indices in source order, with declared class name ("" = infer).
  std::vector<std::pair<std::string, std::string>> loop_decls;
  std::map<std::string, Table> tables;
  std::map<std::string, double> constants;
  std::vector<Item> body;
  std::set<std::string> outputs;
  int call_cost = 1;

  Kernel clone() const;  // deep copy of the loop tree
};

// Program-order walk over every statement; `enclosing` lists the loop chain
// outermost-first, `block` is the owning body and `pos` the item position.
using StmtVisitor = std::function<void(const std::vector<Loop*>& enclosing,
                                       std::vector<Item>& block, size_t pos,
                                       Statement& stmt)>;
void for_each_statement(Kernel& k, const StmtVisitor& fn);
void for_each_statement(const Kernel& k,
                        const std::function<void(const std::vector<const Loop*>&,
                                                 const Statement&)>& fn);

Loop* find_loop(Kernel& k, const std::string& index);
const Loop* find_loop(const Kernel& k, const std::string& index);

// Effective dependences: extra loop indices carried by temporaries beyond
// their subscripts (e.g. a scalar assigned under the element loop depends on
// it even though it has no subscript).
std::map<std::string, std::set<std::string>> effective_extra_deps(const Kernel& k);
std::set<std::string> effective_dep(const ExprPtr& e,
                                    const std::map<std::string, std::set<std::string>>& extra);

// Loop classification. OrderFree is never inferred.
LoopClass classify_loop(const Kernel& k, const std::string& index);

bool is_multilinear(const Kernel& k, const std::vector<std::string>& indices);

// Shape of a validated finite element assembly nest.
struct Validated {
  Kernel k;
  std::string orderfree;          // "" when absent
  std::string reduction;          // "" when absent
  std::vector<std::string> linear;  // primary multilinear nest, outermost first
  int arity = 0;
  bool reduction_perfect = true;  // no statements between L_i and the nest
  // Additional multilinear nests sitting beside the reduction loop (created
  // by table pre-evaluation), outermost-first each.
  std::vector<std::vector<std::string>> side_nests;
};

Validated validate_fem_nest(const Kernel& k);

// Operation count of the whole kernel: loop trip counts multiply the cost of
// their bodies; within one straight-line block, structurally identical
// subexpressions are counted once and shared factor pairs inside n-ary
// products are fused greedily before counting.
unsigned long long flop_count(const Kernel& k);
unsigned long long block_flops(const std::vector<const Statement*>& stmts, int call_cost);

// Removes statements whose target is never read and is not an output, and
// prunes loops left empty. Returns true if anything was removed.
bool dce(Kernel& k);

}  // namespace femopt
