#include "sharing.hpp"

#include <algorithm>

namespace femopt {

using nlohmann::json;

namespace {

struct StmtCtx {
  Statement* stmt = nullptr;
  std::vector<Loop*> chain;        // outermost first
  std::vector<std::string> lin;    // trailing linear indices of the chain
  std::set<std::string> lin_set;
};

StmtCtx locate(Kernel& k, const std::string& lhs_key) {
  StmtCtx ctx;
  for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>& block,
                            size_t pos, Statement& s) {
    if (ctx.stmt || s.lhs->key() != lhs_key) return;
    ctx.stmt = block[pos].stmt.get();
    ctx.chain = chain;
  });
  if (!ctx.stmt) throw Error(ErrorCode::Internal, "statement '" + lhs_key + "' not found");
  for (auto it = ctx.chain.rbegin(); it != ctx.chain.rend(); ++it) {
    if ((*it)->cls != LoopClass::Linear) break;
    ctx.lin.insert(ctx.lin.begin(), (*it)->index);
  }
  ctx.lin_set = std::set<std::string>(ctx.lin.begin(), ctx.lin.end());
  return ctx;
}

// Lhs keys of the innermost statements of the primary and side nests.
std::vector<std::string> nest_statement_keys(Kernel& k, const Validated&) {
  std::vector<std::string> out;
  for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>&, size_t,
                            Statement& s) {
    if (chain.empty() || chain.back()->cls != LoopClass::Linear) return;
    out.push_back(s.lhs->key());
  });
  return out;
}

struct Mono {
  // Per linear loop: the operand it came from ("" key = none) and, once
  // steps 1-2 resolve it, the atom that stands for it.
  std::map<std::string, std::string> operand_key;  // home -> operand key
  std::map<std::string, ExprPtr> atoms;            // home -> atom expression
  std::vector<ExprPtr> sigma;                      // linear-invariant factors
  ExprPtr joint;  // factor(s) spanning >= 2 linear loops (not factorable)
};

struct Analysis {
  std::vector<Mono> monos;
  std::vector<Operand> operands;        // distinct, canonical order
  std::map<std::string, size_t> operand_index;
  std::vector<OperandPartition> parts;  // default strategy flags applied
  std::map<std::string, size_t> operand_part;  // operand key -> partition
};

std::set<std::string> operand_symbols(const ExprPtr& e, const std::string& home) {
  std::set<std::string> out;
  visit(e, [&](const ExprPtr& n) {
    if (n->kind != ExprKind::Sym) return;
    if (std::find(n->indices.begin(), n->indices.end(), home) != n->indices.end())
      out.insert(n->key());
  });
  return out;
}

Analysis analyze(Kernel&, const StmtCtx& ctx,
                 const std::map<std::string, std::set<std::string>>& extra) {
  Analysis a;
  ExprPtr rhs = reassociate(
      normalize_sum_of_monomials(reassociate(ctx.stmt->rhs), ctx.lin_set, extra));

  for (const auto& term : summands(rhs)) {
    Mono m;
    std::map<std::string, std::vector<ExprPtr>> op_factors;
    std::vector<ExprPtr> joint_factors;
    for (const auto& f : factors(term)) {
      auto d = effective_dep(f, extra);
      std::vector<std::string> homes;
      for (const auto& ix : ctx.lin)
        if (d.count(ix)) homes.push_back(ix);
      if (homes.empty())
        m.sigma.push_back(f);
      else if (homes.size() == 1)
        op_factors[homes[0]].push_back(f);
      else
        joint_factors.push_back(f);
    }
    if (!joint_factors.empty()) m.joint = mul(std::move(joint_factors));
    for (auto& [home, fs] : op_factors) {
      ExprPtr op = mul(fs);
      m.operand_key[home] = op->key();
      if (!a.operand_index.count(op->key())) {
        // Register later in nest order; remember the expression now.
        a.operand_index[op->key()] = static_cast<size_t>(-1);
        a.operands.push_back(Operand{op, home, operand_symbols(op, home)});
      }
    }
    a.monos.push_back(std::move(m));
  }

  // Canonical operand order: home position in the nest, then first appearance.
  std::stable_sort(a.operands.begin(), a.operands.end(),
                   [&](const Operand& x, const Operand& y) {
                     auto px = std::find(ctx.lin.begin(), ctx.lin.end(), x.home);
                     auto py = std::find(ctx.lin.begin(), ctx.lin.end(), y.home);
                     return px < py;
                   });
  for (size_t i = 0; i < a.operands.size(); ++i)
    a.operand_index[a.operands[i].expr->key()] = i;

  // Partition by overlapping symbol sets (union-find).
  std::vector<size_t> parent(a.operands.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  std::function<size_t(size_t)> find = [&](size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (size_t i = 0; i < a.operands.size(); ++i)
    for (size_t j = i + 1; j < a.operands.size(); ++j) {
      const auto& si = a.operands[i].symbols;
      const auto& sj = a.operands[j].symbols;
      bool overlap = std::any_of(si.begin(), si.end(),
                                 [&](const std::string& s) { return sj.count(s) > 0; });
      if (overlap) parent[find(j)] = find(i);
    }
  std::map<size_t, size_t> root_to_part;
  for (size_t i = 0; i < a.operands.size(); ++i) {
    size_t r = find(i);
    auto it = root_to_part.find(r);
    if (it == root_to_part.end()) {
      it = root_to_part.emplace(r, a.parts.size()).first;
      a.parts.push_back(OperandPartition{});
    }
    OperandPartition& p = a.parts[it->second];
    p.operands.push_back(a.operands[i]);
    p.symbols.insert(a.operands[i].symbols.begin(), a.operands[i].symbols.end());
    a.operand_part[a.operands[i].expr->key()] = it->second;
  }
  for (auto& p : a.parts) p.strategy_one = p.operands.size() <= p.symbols.size();
  return a;
}

// Affine expansion of an operand into (symbol-atom product, coefficient)
// terms; a null atom marks the symbol-free remainder term.
std::vector<std::pair<ExprPtr, ExprPtr>> expand_operand(const Operand& op) {
  std::set<std::string> names;
  visit(op.expr, [&](const ExprPtr& n) {
    if (n->kind == ExprKind::Sym &&
        std::find(n->indices.begin(), n->indices.end(), op.home) != n->indices.end())
      names.insert(n->name);
  });
  ExprPtr ex = expand(op.expr, names);
  std::vector<std::pair<ExprPtr, ExprPtr>> out;
  for (const auto& term : summands(ex)) {
    std::vector<ExprPtr> atoms, rest;
    for (const auto& f : factors(term)) {
      if (f->kind == ExprKind::Sym &&
          std::find(f->indices.begin(), f->indices.end(), op.home) != f->indices.end())
        atoms.push_back(f);
      else
        rest.push_back(f);
    }
    out.emplace_back(atoms.empty() ? nullptr : mul(std::move(atoms)), mul(std::move(rest)));
  }
  return out;
}

bool is_one_const(const ExprPtr& e) { return e->kind == ExprKind::Const && e->value == 1.0; }

// Applies strategy decisions: expands strategy-two operands into atoms (the
// coefficients join sigma), leaves strategy-one operand keys to be resolved
// to hoisted temporaries later.
std::vector<Mono> atomize(const Analysis& a, const std::vector<bool>& strategy_one) {
  std::vector<Mono> monos = a.monos;
  for (size_t pi = 0; pi < a.parts.size(); ++pi) {
    if (strategy_one[pi]) continue;
    for (const Operand& op : a.parts[pi].operands) {
      auto terms = expand_operand(op);
      std::vector<Mono> next;
      for (const Mono& m : monos) {
        auto it = m.operand_key.find(op.home);
        if (it == m.operand_key.end() || it->second != op.expr->key()) {
          next.push_back(m);
          continue;
        }
        for (const auto& [atom, coeff] : terms) {
          Mono m2 = m;
          m2.operand_key.erase(op.home);
          if (atom) m2.atoms[op.home] = atom;
          if (!is_one_const(coeff)) {
            auto cf = factors(coeff);
            m2.sigma.insert(m2.sigma.end(), cf.begin(), cf.end());
          }
          next.push_back(std::move(m2));
        }
      }
      monos = std::move(next);
    }
  }
  return monos;
}

}  // namespace

std::vector<OperandPartition> collect_operands(const Validated& v) {
  Kernel k = v.k.clone();
  auto extra = effective_extra_deps(k);
  std::vector<OperandPartition> out;
  for (const auto& key : nest_statement_keys(k, v)) {
    StmtCtx ctx = locate(k, key);
    Analysis a = analyze(k, ctx, extra);
    out.insert(out.end(), a.parts.begin(), a.parts.end());
  }
  return out;
}

namespace {

struct GraphBuild {
  SharingGraph g;
  std::vector<Mono> monos;                      // atomized
  std::map<int, std::pair<int, int>> mono_edge;  // mono index -> vertex pair
};

// Builds instance-level vertices/edges for one statement, resolving
// strategy-one operands to placeholder names when not mutating the kernel.
GraphBuild build_graph_for(Kernel& k, const StmtCtx& ctx,
                           const std::map<std::string, std::set<std::string>>& extra,
                           const Analysis& a, const std::vector<bool>& strategy_one) {
  (void)k;
  (void)extra;
  GraphBuild gb;
  gb.monos = atomize(a, strategy_one);
  // Placeholder atoms for unexpanded operands, in canonical operand order.
  std::map<std::string, ExprPtr> stand_in;
  int n = 0;
  for (const Operand& op : a.operands) {
    size_t pi = a.operand_part.at(op.expr->key());
    if (!strategy_one[pi]) continue;
    if (op.expr->kind == ExprKind::Sym)
      stand_in[op.expr->key()] = op.expr;
    else
      stand_in[op.expr->key()] = sym("t" + std::to_string(n++));
  }
  for (auto& m : gb.monos)
    for (auto& [home, okey] : m.operand_key) m.atoms[home] = stand_in.at(okey);

  std::map<std::pair<std::string, int>, int> vid;
  auto vertex = [&](const std::string& s, int inst) {
    auto it = vid.find({s, inst});
    if (it != vid.end()) return it->second;
    int id = static_cast<int>(gb.g.vertices.size());
    gb.g.vertices.push_back({s, inst});
    vid[{s, inst}] = id;
    return id;
  };
  for (size_t mi = 0; mi < gb.monos.size(); ++mi) {
    const Mono& m = gb.monos[mi];
    if (m.atoms.size() != 2) continue;
    std::vector<ExprPtr> pair;
    for (const auto& ix : ctx.lin)
      if (m.atoms.count(ix)) pair.push_back(m.atoms.at(ix));
    int u = vertex(pair[0]->key(), static_cast<int>(mi));
    int w = vertex(pair[1]->key(), static_cast<int>(mi));
    gb.g.edges.emplace_back(u, w);
    gb.mono_edge[static_cast<int>(mi)] = {u, w};
  }
  return gb;
}

}  // namespace

SharingGraph build_sharing_graph(const Validated& v) {
  Kernel k = v.k.clone();
  auto extra = effective_extra_deps(k);
  SharingGraph g;
  for (const auto& key : nest_statement_keys(k, v)) {
    StmtCtx ctx = locate(k, key);
    Analysis a = analyze(k, ctx, extra);
    std::vector<bool> strat;
    for (const auto& p : a.parts) strat.push_back(p.strategy_one);
    GraphBuild gb = build_graph_for(k, ctx, extra, a, strat);
    int base = static_cast<int>(g.vertices.size());
    for (const auto& vx : gb.g.vertices) g.vertices.push_back(vx);
    for (const auto& [u, w] : gb.g.edges) g.edges.emplace_back(base + u, base + w);
  }
  return g;
}

SharingGraph merge_vertices(const SharingGraph& g, const Validated& v) {
  // Symbols whose instances may all be factored without growing the
  // statement: merge them. The check expands + factors the symbol out of the
  // statement it appears in and compares plain operation counts.
  std::map<std::string, int> count;
  for (const auto& vx : g.vertices) ++count[vx.sym];

  Kernel k = v.k.clone();
  auto mergeable = [&](const std::string& sym_key) {
    std::string name = sym_key.substr(0, sym_key.find('['));
    bool ok = true;
    for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>&, size_t,
                              Statement& s) {
      if (chain.empty() || chain.back()->cls != LoopClass::Linear) return;
      bool uses = false;
      visit(s.rhs, [&](const ExprPtr& n) {
        if (n->kind == ExprKind::Sym && n->name == name) uses = true;
      });
      if (!uses) return;
      ExprPtr base = reassociate(s.rhs);
      long before = op_count(base, k.call_cost);
      try {
        ExprPtr f = factorize(expand(base, {name}), {name});
        if (op_count(f, k.call_cost) > before) ok = false;
      } catch (const Error&) {
        ok = false;  // not distributable: leave instances apart
      }
    });
    return ok;
  };

  SharingGraph out;
  std::map<std::string, int> merged_id;
  std::map<int, int> remap;
  for (size_t i = 0; i < g.vertices.size(); ++i) {
    const auto& vx = g.vertices[i];
    if (count[vx.sym] > 1 && mergeable(vx.sym)) {
      auto it = merged_id.find(vx.sym);
      if (it == merged_id.end()) {
        it = merged_id.emplace(vx.sym, static_cast<int>(out.vertices.size())).first;
        out.vertices.push_back({vx.sym, -1});
      }
      remap[static_cast<int>(i)] = it->second;
    } else {
      remap[static_cast<int>(i)] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(vx);
    }
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& [u, w] : g.edges) {
    int a = remap.at(u), b = remap.at(w);
    if (a > b) std::swap(a, b);
    if (seen.insert({a, b}).second) out.edges.emplace_back(a, b);
  }
  return out;
}

IlpSolution solve_ilp(const SharingGraph& g) {
  size_t n = g.vertices.size();
  if (n > 22) throw Error(ErrorCode::Internal, "sharing graph too large for exact cover");
  unsigned long long best_mask = 0;
  int best_count = -1;
  std::vector<std::string> best_names;
  for (unsigned long long mask = 0; mask < (1ull << n); ++mask) {
    bool ok = true;
    for (const auto& [u, w] : g.edges)
      if (!((mask >> u) & 1) && !((mask >> w) & 1)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    int c = __builtin_popcountll(mask);
    if (best_count >= 0 && c > best_count) continue;
    std::vector<std::string> names;
    for (size_t i = 0; i < n; ++i)
      if ((mask >> i) & 1) names.push_back(g.vertices[i].sym);
    std::sort(names.begin(), names.end());
    if (best_count < 0 || c < best_count || names < best_names) {
      best_count = c;
      best_mask = mask;
      best_names = std::move(names);
    }
  }
  IlpSolution sol;
  sol.objective = best_count < 0 ? 0 : best_count;
  for (size_t i = 0; i < n; ++i)
    if ((best_mask >> i) & 1) sol.selected.insert(g.vertices[i].sym);
  for (const auto& [u, w] : g.edges) {
    const std::string& a = g.vertices[u].sym;
    const std::string& b = g.vertices[w].sym;
    bool a_sel = sol.selected.count(a), b_sel = sol.selected.count(b);
    const std::string& winner = a_sel && (!b_sel || a < b) ? a : b;
    const std::string& loser = winner == a ? b : a;
    sol.y[winner][loser] = 1;
    sol.y[loser][winner] = 0;
  }
  return sol;
}

namespace {

json graph_to_json(const SharingGraph& g) {
  json jg;
  jg["vertices"] = json::array();
  for (const auto& vx : g.vertices)
    jg["vertices"].push_back({{"sym", vx.sym}, {"instance", vx.instance}});
  jg["edges"] = json::array();
  for (const auto& [u, w] : g.edges)
    jg["edges"].push_back({g.vertices[u].sym, g.vertices[w].sym});
  return jg;
}

// Applies the full per-statement pipeline in place.
void apply_statement(Kernel& k, const std::string& lhs_key,
                     const std::vector<bool>& strategy_one, Hoister& h, json* rec) {
  auto extra = effective_extra_deps(k);
  StmtCtx ctx = locate(k, lhs_key);
  Analysis a = analyze(k, ctx, extra);
  if (rec) {
    json jp = json::array();
    for (size_t pi = 0; pi < a.parts.size(); ++pi) {
      json p;
      p["operands"] = json::array();
      for (const auto& op : a.parts[pi].operands) p["operands"].push_back(op.expr->key());
      p["symbols"] = a.parts[pi].symbols;
      p["strategy"] = strategy_one[pi] ? 1 : 2;
      jp.push_back(p);
    }
    (*rec)["statement"] = lhs_key;
    (*rec)["partitions"] = jp;
  }

  std::vector<Mono> monos = atomize(a, strategy_one);

  // Hoist compound linear-invariant factors (sigma and expansion coefficients).
  for (auto& m : monos) {
    for (auto& s : m.sigma) {
      if (is_atom(s)) continue;
      extra = effective_extra_deps(k);
      auto d = effective_dep(s, extra);
      s = h.hoist(ctx.chain, s, d).replacement;
    }
  }

  // Strategy one: hoist compound operands; bare symbols stand for themselves.
  std::map<std::string, ExprPtr> atom_of;
  for (const Operand& op : a.operands) {
    size_t pi = a.operand_part.at(op.expr->key());
    if (!strategy_one[pi]) continue;
    if (op.expr->kind == ExprKind::Sym) {
      atom_of[op.expr->key()] = op.expr;
    } else {
      extra = effective_extra_deps(k);
      auto d = effective_dep(op.expr, extra);
      atom_of[op.expr->key()] = h.hoist(ctx.chain, op.expr, d).replacement;
    }
  }
  for (auto& m : monos)
    for (auto& [home, okey] : m.operand_key) m.atoms[home] = atom_of.at(okey);

  // Sharing graph over atom instances, merged per symbol, covered exactly.
  SharingGraph g;
  std::map<int, std::pair<std::string, std::string>> mono_pair;  // mono -> (outer, inner) atom keys
  {
    std::map<std::string, int> vid;
    auto vertex = [&](const std::string& s) {
      auto it = vid.find(s);
      if (it != vid.end()) return it->second;
      int id = static_cast<int>(g.vertices.size());
      g.vertices.push_back({s, -1});
      vid[s] = id;
      return id;
    };
    for (size_t mi = 0; mi < monos.size(); ++mi) {
      const Mono& m = monos[mi];
      if (m.atoms.size() != 2) continue;
      std::vector<std::string> pairk;
      for (const auto& ix : ctx.lin)
        if (m.atoms.count(ix)) pairk.push_back(m.atoms.at(ix)->key());
      int u = vertex(pairk[0]);
      int w = vertex(pairk[1]);
      bool dup = false;
      for (const auto& [eu, ew] : g.edges)
        if ((eu == u && ew == w) || (eu == w && ew == u)) dup = true;
      if (!dup) g.edges.emplace_back(u, w);
      mono_pair[static_cast<int>(mi)] = {pairk[0], pairk[1]};
    }
  }
  IlpSolution sol = solve_ilp(g);
  if (rec) {
    (*rec)["graph"] = graph_to_json(g);
    (*rec)["cover"] = sol.selected;
    (*rec)["objective"] = sol.objective;
  }

  // Rebuild the statement.
  auto atom_expr_for = [&](const std::string& key) -> ExprPtr {
    for (const auto& m : monos)
      for (const auto& [home, at] : m.atoms)
        if (at->key() == key) return at;
    throw Error(ErrorCode::Internal, "atom not found: " + key);
  };
  std::vector<ExprPtr> terms;
  std::set<size_t> done;

  // Claimed products: one coefficient per selected symbol.
  std::vector<std::string> selected(sol.selected.begin(), sol.selected.end());
  for (const std::string& s : selected) {
    std::vector<ExprPtr> contributions;
    for (size_t mi = 0; mi < monos.size(); ++mi) {
      auto it = mono_pair.find(static_cast<int>(mi));
      if (it == mono_pair.end()) continue;
      const auto& [ka, kb] = it->second;
      std::string other;
      if (ka == s && sol.y.at(ka).at(kb) == 1)
        other = kb;
      else if (kb == s && sol.y.at(kb).at(ka) == 1)
        other = ka;
      else
        continue;
      const Mono& m = monos[mi];
      std::vector<ExprPtr> fs = factors(atom_expr_for(other));
      fs.insert(fs.end(), m.sigma.begin(), m.sigma.end());
      contributions.push_back(mul(std::move(fs)));
      done.insert(mi);
    }
    if (contributions.empty()) continue;
    ExprPtr coeff = add(contributions);
    if (!is_atom(coeff)) {
      extra = effective_extra_deps(k);
      coeff = h.hoist(ctx.chain, coeff, effective_dep(coeff, extra)).replacement;
    }
    std::vector<ExprPtr> fs = factors(atom_expr_for(s));
    fs.push_back(coeff);
    terms.push_back(mul(std::move(fs)));
  }

  // Single-atom monomials: factor per atom when it recurs; hoist invariant
  // coefficient products.
  std::map<std::string, std::vector<size_t>> by_atom;
  std::vector<std::string> atom_order;
  for (size_t mi = 0; mi < monos.size(); ++mi) {
    if (done.count(mi)) continue;
    const Mono& m = monos[mi];
    if (m.atoms.size() != 1 || m.joint) continue;
    const std::string& ak = m.atoms.begin()->second->key();
    if (!by_atom.count(ak)) atom_order.push_back(ak);
    by_atom[ak].push_back(mi);
    done.insert(mi);
  }
  for (const std::string& ak : atom_order) {
    const auto& group = by_atom[ak];
    ExprPtr atom = monos[group[0]].atoms.begin()->second;
    if (group.size() >= 2) {
      std::vector<ExprPtr> coeffs;
      for (size_t mi : group) coeffs.push_back(mul(monos[mi].sigma));
      ExprPtr coeff = add(std::move(coeffs));
      if (!is_atom(coeff)) {
        extra = effective_extra_deps(k);
        coeff = h.hoist(ctx.chain, coeff, effective_dep(coeff, extra)).replacement;
      }
      std::vector<ExprPtr> fs = factors(atom);
      if (!is_one_const(coeff)) fs.push_back(coeff);
      terms.push_back(mul(std::move(fs)));
    } else {
      const Mono& m = monos[group[0]];
      std::vector<ExprPtr> fs = factors(atom);
      if (m.sigma.size() >= 2) {
        ExprPtr prod = mul(m.sigma);
        extra = effective_extra_deps(k);
        fs.push_back(h.hoist(ctx.chain, prod, effective_dep(prod, extra)).replacement);
      } else if (m.sigma.size() == 1 && !is_one_const(m.sigma[0])) {
        fs.push_back(m.sigma[0]);
      }
      terms.push_back(mul(std::move(fs)));
    }
  }

  // Leftovers: pure sigma monomials and joint (unfactorable) ones.
  for (size_t mi = 0; mi < monos.size(); ++mi) {
    if (done.count(mi)) continue;
    const Mono& m = monos[mi];
    std::vector<ExprPtr> fs;
    if (m.joint) {
      auto jf = factors(m.joint);
      fs.insert(fs.end(), jf.begin(), jf.end());
      for (const auto& [home, at] : m.atoms) {
        auto af = factors(at);
        fs.insert(fs.end(), af.begin(), af.end());
      }
      if (m.sigma.size() >= 2) {
        ExprPtr prod = mul(m.sigma);
        extra = effective_extra_deps(k);
        fs.push_back(h.hoist(ctx.chain, prod, effective_dep(prod, extra)).replacement);
      } else if (m.sigma.size() == 1 && !is_one_const(m.sigma[0])) {
        fs.push_back(m.sigma[0]);
      }
      terms.push_back(mul(std::move(fs)));
    } else {
      // No linear dependence at all: hoist the whole product.
      ExprPtr prod = mul(m.sigma);
      if (is_atom(prod)) {
        terms.push_back(prod);
      } else {
        extra = effective_extra_deps(k);
        terms.push_back(h.hoist(ctx.chain, prod, effective_dep(prod, extra)).replacement);
      }
    }
  }

  ctx.stmt->rhs = add(std::move(terms));
}

// Inlines a temporary defined and used under the same loop index set when it
// is read exactly once; merges the chains trailing operand temporaries leave
// behind.
void inline_single_use(Kernel& k, const std::set<std::string>& created) {
  for (;;) {
    struct Site {
      Statement* stmt = nullptr;
      std::vector<Item>* block = nullptr;
      size_t pos = 0;
      std::set<std::string> indices;
    };
    std::map<std::string, int> uses;
    std::map<std::string, Site> def, use;
    for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>& block,
                              size_t pos, Statement& s) {
      std::set<std::string> ix;
      for (Loop* l : chain) ix.insert(l->index);
      if (created.count(s.lhs->name) && !s.aug)
        def[s.lhs->name] = Site{&s, &block, pos, ix};
      visit(s.rhs, [&](const ExprPtr& n) {
        if (n->kind != ExprKind::Sym || !created.count(n->name)) return;
        ++uses[n->name];
        use[n->name] = Site{&s, &block, pos, ix};
      });
    });
    bool changed = false;
    for (const auto& [name, n] : uses) {
      if (n != 1 || !def.count(name)) continue;
      const Site& d = def[name];
      const Site& u = use[name];
      if (d.indices != u.indices || d.stmt == u.stmt) continue;
      std::string key = d.stmt->lhs->key();
      u.stmt->rhs = substitute(u.stmt->rhs, {{key, d.stmt->rhs}});
      d.block->erase(d.block->begin() + d.pos);
      changed = true;
      break;  // positions shifted; rescan
    }
    if (!changed) break;
  }
  // Drop loops emptied by inlining.
  std::function<void(std::vector<Item>&)> prune = [&](std::vector<Item>& block) {
    for (size_t i = 0; i < block.size();) {
      if (block[i].loop) {
        prune(block[i].loop->body);
        if (block[i].loop->body.empty()) {
          block.erase(block.begin() + i);
          continue;
        }
      }
      ++i;
    }
  };
  prune(k.body);
}

// Final pass over statements outside the linear nests: keep any single-symbol
// factorization that lowers the plain operation count.
void optimize_outer(Kernel& k) {
  for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>&, size_t,
                            Statement& s) {
    for (Loop* l : chain)
      if (l->cls == LoopClass::Linear) return;
    for (;;) {
      ExprPtr base = reassociate(s.rhs);
      long best_n = op_count(base, k.call_cost);
      ExprPtr best;
      std::map<std::string, int> names;
      for (const auto& t : summands(base))
        for (const auto& f : factors(t))
          if (f->kind == ExprKind::Sym) ++names[f->name];
      for (const auto& [name, cnt] : names) {
        if (cnt < 2) continue;
        ExprPtr f = factorize(base, {name});
        long n = op_count(f, k.call_cost);
        if (n < best_n) {
          best_n = n;
          best = f;
        }
      }
      if (!best) break;
      s.rhs = best;
    }
  });
}

}  // namespace

Kernel sharing_elimination(const Validated& v, json* trace) {
  Kernel k = v.k.clone();
  unsigned long long before = flop_count(k);
  Hoister h(k);
  json steps = json::array();

  for (const auto& key : nest_statement_keys(k, v)) {
    auto extra = effective_extra_deps(k);
    StmtCtx ctx = locate(k, key);
    Analysis a = analyze(k, ctx, extra);

    // Partitions with more operands than symbols default to expansion, but
    // only when a trial run of the whole statement pipeline confirms the
    // operation count drops.
    std::vector<bool> strat;
    std::vector<size_t> pending;
    for (size_t pi = 0; pi < a.parts.size(); ++pi) {
      strat.push_back(a.parts[pi].strategy_one);
      if (!a.parts[pi].strategy_one) pending.push_back(pi);
    }
    if (!pending.empty() && pending.size() <= 6) {
      unsigned long long best = ~0ull;
      unsigned best_mask = 0;
      for (unsigned mask = 0; mask < (1u << pending.size()); ++mask) {
        std::vector<bool> s2 = strat;
        for (size_t b = 0; b < pending.size(); ++b)
          s2[pending[b]] = (mask >> b) & 1;  // bit set = force strategy one
        Kernel trial = k.clone();
        Hoister th(trial);
        apply_statement(trial, key, s2, th, nullptr);
        unsigned long long c = flop_count(trial);
        if (c < best || (c == best && __builtin_popcount(mask) >
                                          __builtin_popcount(best_mask))) {
          best = c;
          best_mask = mask;
        }
      }
      for (size_t b = 0; b < pending.size(); ++b)
        strat[pending[b]] = (best_mask >> b) & 1;
    }

    json rec;
    apply_statement(k, key, strat, h, trace ? &rec : nullptr);
    if (trace) steps.push_back(std::move(rec));
  }

  unsigned long long after_reschedule = flop_count(k);
  inline_single_use(k, h.created());
  optimize_outer(k);
  unsigned long long after_cleanup = flop_count(k);

  if (trace) {
    json t;
    t["statements"] = std::move(steps);
    t["flops_before"] = before;
    t["flops_after_reschedule"] = after_reschedule;
    t["flops_after_cleanup"] = after_cleanup;
    trace->push_back(std::move(t));
  }
  if (after_cleanup > before) return v.k.clone();  // never regress
  return k;
}

}  // namespace femopt
