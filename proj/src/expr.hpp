#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace femopt {

// Error codes shared by the whole library; the C API maps these 1:1.
enum class ErrorCode {
  Parse,
  UnknownLoop,
  NotFemNest,
  NonDistributable,
  NonSeparable,
  NotNormalForm,
  TooManyMonomials,
  InconsistentLayout,
  InvalidArg,
  Io,
  Internal,
};

struct Error : std::runtime_error {
  ErrorCode code;
  Error(ErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

enum class ExprKind { Const, Sym, Add, Mul, Div, Call };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Immutable expression node. `dep` is the set of loop indices the node
// syntactically depends on (indices of Sym leaves, unioned upward).
struct Expr {
  ExprKind kind;
  double value = 0.0;                // Const
  std::string name;                  // Sym / Call
  std::vector<std::string> indices;  // Sym
  std::vector<ExprPtr> args;         // Add/Mul children, Div {num,den}, Call args
  std::set<std::string> dep;

  // Canonical textual form; doubles as structural identity for CSE.
  const std::string& key() const;

 private:
  mutable std::string key_;
};

ExprPtr constant(double v);
ExprPtr sym(std::string name, std::vector<std::string> indices = {});
ExprPtr add(std::vector<ExprPtr> terms);    // collapses arity 0/1
ExprPtr mul(std::vector<ExprPtr> factors);  // collapses arity 0/1
ExprPtr divide(ExprPtr num, ExprPtr den);
ExprPtr call(std::string fn, std::vector<ExprPtr> args);

bool is_atom(const ExprPtr& e);  // Const or Sym

// Children if the node is an Add (resp. Mul), otherwise {e}.
std::vector<ExprPtr> summands(const ExprPtr& e);
std::vector<ExprPtr> factors(const ExprPtr& e);

// Flattens nested Add/Mul, folds constants, sorts operands by canonical key.
ExprPtr reassociate(const ExprPtr& e);

// Plain operator count of one expression tree (no CSE, no loop weighting).
// Div counts 1, Call counts `call_cost`.
long op_count(const ExprPtr& e, int call_cost = 1);

// Occurrence degree of the symbol with canonical key `sym_key` in `e`;
// returns a large sentinel when the symbol sits under a Div denominator or
// inside Call arguments (non-affine positions).
int sym_degree(const ExprPtr& e, const std::string& sym_key);
inline constexpr int kNonAffine = 1 << 20;

// Replaces every subexpression whose key is in `by_key` with the mapped node.
ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& by_key);

void visit(const ExprPtr& e, const std::function<void(const ExprPtr&)>& fn);

}  // namespace femopt
