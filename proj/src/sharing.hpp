#pragma once

#include "json.hpp"
#include "rewrite.hpp"

namespace femopt {

// A multilinear operand: a maximal factor of a monomial depending on exactly
// one linear loop.
struct Operand {
  ExprPtr expr;
  std::string home;               // the linear index it depends on
  std::set<std::string> symbols;  // keys of the symbols subscripted by `home`
};

// Operands grouped by overlapping symbol sets. Strategy one hoists the
// operands whole; strategy two expands them into per-symbol terms so the
// symbols themselves can be factored (chosen when the partition has more
// operands than symbols and a trial shows it pays off).
struct OperandPartition {
  std::vector<Operand> operands;  // distinct, canonical order
  std::set<std::string> symbols;
  bool strategy_one = true;
};

std::vector<OperandPartition> collect_operands(const Validated& v);

// Vertices are instances of multilinear symbols (or would-be operand
// temporaries); edges join the two sides of a product that expansion would
// otherwise multiply out.
struct SharingGraph {
  struct Vertex {
    std::string sym;    // canonical symbol key
    int instance;       // monomial instance, -1 once merged
  };
  std::vector<Vertex> vertices;
  std::vector<std::pair<int, int>> edges;  // vertex indices
};

SharingGraph build_sharing_graph(const Validated& v);

// Collapses same-symbol instances unless factoring the symbol out of its
// summands would raise the statement's operation count (which happens when
// the factoring forces an unprofitable expansion).
SharingGraph merge_vertices(const SharingGraph& g, const Validated& v);

struct IlpSolution {
  std::set<std::string> selected;
  std::map<std::string, std::map<std::string, int>> y;  // y[a][b] per edge a-b
  int objective = 0;
};

// Exact minimum vertex cover: minimize sum x_i subject to, for every edge
// (i,j), y_ij + y_ji = 1 and sum_j y_ij <= n_i * x_i with n_i the degree of
// vertex i. Ties broken toward the lexicographically smallest vertex set.
IlpSolution solve_ilp(const SharingGraph& g);

// Full sharing elimination pass. Appends a per-statement record to *trace
// when given. The result never exceeds the input operation count.
Kernel sharing_elimination(const Validated& v, nlohmann::json* trace = nullptr);

}  // namespace femopt
