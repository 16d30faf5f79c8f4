#include "preeval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rewrite.hpp"

namespace femopt {

namespace {

struct Split {
  // γ = element-level/constant factors, τ = reduction-level factors; the
  // groups sum the τ parts sharing one canonical γ product.
  bool ok = true;
  std::string reason;
  std::vector<std::pair<ExprPtr, ExprPtr>> groups;
};

enum class Part { Gamma, Tau, Mixed };

struct Classifier {
  const Validated* v;
  const Kernel* k;
  const std::map<std::string, std::set<std::string>>* extra;

  bool inner_dep(const std::set<std::string>& d) const {
    if (!v->reduction.empty() && d.count(v->reduction)) return true;
    for (const auto& ix : v->linear)
      if (d.count(ix)) return true;
    return false;
  }
  bool outer_dep(const std::set<std::string>& d) const {
    return !v->orderfree.empty() && d.count(v->orderfree);
  }
  Part part(const ExprPtr& e) const {
    auto d = effective_dep(e, *extra);
    bool in = inner_dep(d), out = outer_dep(d);
    if (in && out) return Part::Mixed;
    if (in) return Part::Tau;
    return Part::Gamma;  // element-level or loop-invariant
  }
};

// Distributes mixed sums inside one monomial until it is a sum of products of
// unmixed factors. Returns the product terms.
bool distribute_mixed(const ExprPtr& mono, const Classifier& c,
                      std::vector<ExprPtr>& out, std::string& reason) {
  for (const auto& f : factors(mono)) {
    if (c.part(f) != Part::Mixed) continue;
    if (f->kind != ExprKind::Add) {
      reason = "factor mixes element and reduction content: " + f->key();
      return false;
    }
    std::vector<ExprPtr> rest;
    for (const auto& g : factors(mono))
      if (g != f) rest.push_back(g);
    for (const auto& t : f->args) {
      std::vector<ExprPtr> fs = rest;
      auto tf = factors(t);
      fs.insert(fs.end(), tf.begin(), tf.end());
      if (!distribute_mixed(reassociate(mul(std::move(fs))), c, out, reason)) return false;
    }
    return true;
  }
  out.push_back(mono);
  return true;
}

Split isolate(const ExprPtr& mono, const Classifier& c) {
  Split s;
  std::vector<ExprPtr> terms;
  if (!distribute_mixed(mono, c, terms, s.reason)) {
    s.ok = false;
    return s;
  }
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<ExprPtr>, std::vector<ExprPtr>>> groups;
  for (const auto& term : terms) {
    std::vector<ExprPtr> gamma, tau;
    for (const auto& f : factors(term)) {
      if (f->kind == ExprKind::Const) {
        tau.push_back(f);  // folded numerically
        continue;
      }
      if (c.part(f) == Part::Gamma) {
        gamma.push_back(f);
        continue;
      }
      // Reduction part: must be computable from tables and constants alone.
      bool clean = true;
      visit(f, [&](const ExprPtr& n) {
        if (n->kind == ExprKind::Sym && !c.k->tables.count(n->name) &&
            !c.k->constants.count(n->name))
          clean = false;
      });
      if (!clean) {
        s.ok = false;
        s.reason = "reduction part reads a temporary: " + f->key();
        return s;
      }
      tau.push_back(f);
    }
    std::sort(gamma.begin(), gamma.end(),
              [](const ExprPtr& a, const ExprPtr& b) { return a->key() < b->key(); });
    std::string gk;
    for (const auto& g : gamma) gk += g->key() + "|";
    auto it = groups.find(gk);
    if (it == groups.end()) {
      order.push_back(gk);
      it = groups.emplace(gk, std::make_pair(gamma, std::vector<ExprPtr>{})).first;
    }
    it->second.second.push_back(mul(std::move(tau)));
  }
  for (const auto& gk : order) {
    auto& [gamma, taus] = groups[gk];
    s.groups.emplace_back(mul(gamma), add(taus));
  }
  return s;
}

bool is_one_gamma(const ExprPtr& e) {
  return e->kind == ExprKind::Const && e->value == 1.0;
}

}  // namespace

unsigned long long increase_factor(unsigned n, unsigned kmix) {
  if (kmix == 0) return 1;
  if (n == 0) return 0;
  // C(n + k - 1, k)
  unsigned long long r = 1;
  for (unsigned i = 1; i <= kmix; ++i) r = r * (n - 1 + i) / i;
  return r;
}

std::vector<Monomial> split_monomials(const Validated& v) {
  std::vector<Monomial> out;
  Kernel k = v.k.clone();
  auto extra = effective_extra_deps(k);
  Classifier c{&v, &k, &extra};
  std::set<std::string> lin_set(v.linear.begin(), v.linear.end());

  for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>&, size_t,
                            Statement& s) {
    if (chain.empty() || chain.back()->cls != LoopClass::Linear) return;
    bool under_reduction =
        !v.reduction.empty() &&
        std::any_of(chain.begin(), chain.end(),
                    [&](Loop* l) { return l->index == v.reduction; });
    ExprPtr rhs =
        reassociate(normalize_sum_of_monomials(reassociate(s.rhs), lin_set, extra));
    for (const auto& term : summands(rhs)) {
      Monomial m;
      m.index = out.size();
      m.stmt_lhs = s.lhs->key();
      m.expr = term;
      if (v.reduction.empty() || !under_reduction) {
        m.separable = false;
        m.reject = "no reduction loop around the statement";
        out.push_back(std::move(m));
        continue;
      }
      // Growth bookkeeping over the un-distributed factors.
      std::set<std::string> basis;
      for (const auto& f : factors(term)) {
        if (c.part(f) != Part::Mixed || f->kind != ExprKind::Add) continue;
        ++m.kmix;
        visit(f, [&](const ExprPtr& n) {
          if (n->kind == ExprKind::Sym && c.inner_dep(effective_dep(n, extra)))
            basis.insert(n->key());
        });
      }
      m.n = static_cast<unsigned>(basis.size());
      m.iota = increase_factor(m.n, m.kmix);
      Split sp = isolate(term, c);
      if (!sp.ok) {
        m.separable = false;
        m.reject = sp.reason;
      } else {
        m.groups = std::move(sp.groups);
      }
      out.push_back(std::move(m));
    }
  });
  return out;
}

Table symbolic_reduce(const ExprPtr& tau, const Validated& v) {
  if (v.reduction.empty())
    throw Error(ErrorCode::InvalidArg, "kernel has no reduction loop");
  const Kernel& k = v.k;
  std::map<std::string, std::set<std::string>> no_extra;
  auto d = effective_dep(tau, no_extra);
  Table t;
  t.prov = Table::Prov::Preevaluated;
  for (const auto& ix : v.linear)
    if (d.count(ix)) t.dims.push_back(ix);

  std::map<std::string, long> idx;
  std::function<double(const ExprPtr&)> ev = [&](const ExprPtr& e) -> double {
    switch (e->kind) {
      case ExprKind::Const:
        return e->value;
      case ExprKind::Sym: {
        if (e->indices.empty()) {
          auto cc = k.constants.find(e->name);
          if (cc != k.constants.end()) return cc->second;
          auto tt = k.tables.find(e->name);
          if (tt != k.tables.end() && tt->second.dims.empty())
            return tt->second.values.at(0);
          throw Error(ErrorCode::NonSeparable, "cannot evaluate '" + e->name + "'");
        }
        auto tt = k.tables.find(e->name);
        if (tt == k.tables.end())
          throw Error(ErrorCode::NonSeparable, "cannot evaluate '" + e->name + "'");
        size_t off = 0;
        for (size_t di = 0; di < tt->second.dims.size(); ++di)
          off = off * static_cast<size_t>(k.extents.at(tt->second.dims[di])) +
                static_cast<size_t>(idx.at(e->indices.at(di)));
        return tt->second.values.at(off);
      }
      case ExprKind::Add: {
        double s = 0.0;
        for (const auto& a : e->args) s += ev(a);
        return s;
      }
      case ExprKind::Mul: {
        double p = 1.0;
        for (const auto& a : e->args) p *= ev(a);
        return p;
      }
      case ExprKind::Div:
        return ev(e->args[0]) / ev(e->args[1]);
      case ExprKind::Call: {
        // Mirrors the interpreter's function set.
        double x = ev(e->args[0]);
        if (e->name == "sin") return std::sin(x);
        if (e->name == "cos") return std::cos(x);
        if (e->name == "tan") return std::tan(x);
        if (e->name == "exp") return std::exp(x);
        if (e->name == "log") return std::log(x);
        if (e->name == "sqrt") return std::sqrt(x);
        if (e->name == "fabs" || e->name == "abs") return std::fabs(x);
        if (e->name == "pow") return std::pow(x, ev(e->args[1]));
        throw Error(ErrorCode::InvalidArg, "unknown function '" + e->name + "'");
      }
    }
    throw Error(ErrorCode::Internal, "symbolic_reduce: bad kind");
  };

  long red_extent = k.extents.at(v.reduction);
  std::vector<long> extents;
  size_t size = 1;
  for (const auto& ix : t.dims) {
    extents.push_back(k.extents.at(ix));
    size *= static_cast<size_t>(k.extents.at(ix));
  }
  t.values.assign(size, 0.0);
  std::vector<long> cur(t.dims.size(), 0);
  for (size_t flat = 0; flat < size; ++flat) {
    size_t rem = flat;
    for (size_t di = t.dims.size(); di-- > 0;) {
      cur[di] = static_cast<long>(rem % static_cast<size_t>(extents[di]));
      rem /= static_cast<size_t>(extents[di]);
    }
    for (size_t di = 0; di < t.dims.size(); ++di) idx[t.dims[di]] = cur[di];
    double acc = 0.0;
    for (long i = 0; i < red_extent; ++i) {
      idx[v.reduction] = i;
      acc += ev(tau);
    }
    t.values[flat] = acc;
  }
  return t;
}

PreevalResult preevaluate(const Validated& v, const std::vector<size_t>& chosen,
                          bool structural) {
  PreevalResult res;
  res.k = v.k.clone();
  Kernel& k = res.k;
  if (chosen.empty()) return res;

  auto monos = split_monomials(v);
  std::set<size_t> chosen_set(chosen.begin(), chosen.end());
  for (size_t ci : chosen) {
    if (ci >= monos.size()) throw Error(ErrorCode::InvalidArg, "monomial index out of range");
    if (!monos[ci].separable)
      throw Error(ErrorCode::NonSeparable, monos[ci].reject);
  }

  // Group the chosen monomials per owning statement, preserving order.
  std::map<std::string, std::vector<const Monomial*>> per_stmt_chosen;
  std::map<std::string, std::vector<const Monomial*>> per_stmt_all;
  std::vector<std::string> stmt_order;
  for (const auto& m : monos) {
    if (!per_stmt_all.count(m.stmt_lhs)) stmt_order.push_back(m.stmt_lhs);
    per_stmt_all[m.stmt_lhs].push_back(&m);
    if (chosen_set.count(m.index)) per_stmt_chosen[m.stmt_lhs].push_back(&m);
  }

  Hoister h(k, "g");
  auto unique_table_name = [&](int* counter) {
    std::string name;
    do {
      name = "T" + std::to_string((*counter)++);
    } while (k.tables.count(name) || k.constants.count(name) || k.outputs.count(name));
    return name;
  };
  int tcounter = 0;
  std::map<std::string, std::string> dedup;  // dims+bytes -> table name

  // The replacement nest sits right after the reduction loop.
  Loop* red = find_loop(k, v.reduction);
  if (!red) throw Error(ErrorCode::Internal, "reduction loop disappeared");
  std::vector<Item>* parent = &k.body;
  if (!v.orderfree.empty()) parent = &find_loop(k, v.orderfree)->body;

  std::vector<std::shared_ptr<Loop>> new_nest;
  for (const auto& ix : v.linear) {
    auto l = std::make_shared<Loop>();
    l->index = ix;
    l->cls = LoopClass::Linear;
    l->begin = 0;
    l->end = k.extents.at(ix);
    new_nest.push_back(l);
  }
  for (size_t i = 0; i + 1 < new_nest.size(); ++i)
    new_nest[i]->body.push_back(Item{nullptr, new_nest[i + 1]});

  for (const auto& lhs_key : stmt_order) {
    auto chosen_here = per_stmt_chosen.find(lhs_key);
    if (chosen_here == per_stmt_chosen.end()) continue;

    // Locate the statement and rewrite its residual sum.
    Statement* stmt = nullptr;
    std::vector<Loop*> chain;
    std::vector<Item>* block = nullptr;
    size_t pos = 0;
    for_each_statement(k, [&](const std::vector<Loop*>& ch, std::vector<Item>& blk,
                              size_t p, Statement& s) {
      if (stmt || s.lhs->key() != lhs_key) return;
      stmt = &s;
      chain = ch;
      block = &blk;
      pos = p;
    });
    if (!stmt) throw Error(ErrorCode::Internal, "statement vanished during pre-evaluation");
    std::vector<Loop*> outer_chain;
    for (Loop* l : chain) {
      if (l->index == v.reduction) break;
      outer_chain.push_back(l);
    }

    std::vector<ExprPtr> residual;
    for (const Monomial* m : per_stmt_all[lhs_key])
      if (!chosen_set.count(m->index)) residual.push_back(m->expr);

    std::vector<ExprPtr> new_terms;
    for (const Monomial* m : chosen_here->second) {
      for (const auto& [gamma, tau] : m->groups) {
        std::map<std::string, std::set<std::string>> no_extra;
        Table t;
        if (structural) {
          t.prov = Table::Prov::Preevaluated;
          auto d = effective_dep(tau, no_extra);
          size_t size = 1;
          for (const auto& ix : v.linear)
            if (d.count(ix)) {
              t.dims.push_back(ix);
              size *= static_cast<size_t>(k.extents.at(ix));
            }
          t.values.assign(size, 0.0);
        } else {
          t = symbolic_reduce(tau, v);
        }
        std::string name;
        if (!structural) {
          std::string sig;
          for (const auto& d : t.dims) sig += d + ",";
          sig += ":";
          sig.append(reinterpret_cast<const char*>(t.values.data()),
                     t.values.size() * sizeof(double));
          auto it = dedup.find(sig);
          if (it != dedup.end()) {
            name = it->second;
          } else {
            name = unique_table_name(&tcounter);
            dedup[sig] = name;
            k.tables[name] = t;
            res.table_bytes += t.values.size() * sizeof(double);
          }
        } else {
          name = unique_table_name(&tcounter);
          k.tables[name] = t;
          res.table_bytes += t.values.size() * sizeof(double);
        }

        ExprPtr tref = sym(name, k.tables[name].dims);
        if (is_one_gamma(gamma)) {
          new_terms.push_back(tref);
        } else if (is_atom(gamma)) {
          new_terms.push_back(mul({gamma, tref}));
        } else {
          auto extra = effective_extra_deps(k);
          ExprPtr g = h.hoist(outer_chain, gamma, effective_dep(gamma, extra)).replacement;
          new_terms.push_back(mul({g, tref}));
        }
      }
    }

    // New accumulation in the replacement nest.
    auto ns = std::make_shared<Statement>();
    ns->lhs = stmt->lhs;
    ns->aug = true;
    ns->rhs = add(std::move(new_terms));
    new_nest.back()->body.push_back(Item{ns, nullptr});

    if (residual.empty())
      block->erase(block->begin() + pos);
    else
      stmt->rhs = add(std::move(residual));
  }

  // Insert the new nest after the reduction loop, then drop anything the
  // rewrite emptied (possibly the reduction loop itself).
  size_t insert_at = parent->size();
  for (size_t i = 0; i < parent->size(); ++i)
    if ((*parent)[i].loop.get() == red) {
      insert_at = i + 1;
      break;
    }
  parent->insert(parent->begin() + insert_at, Item{nullptr, new_nest[0]});

  std::function<void(std::vector<Item>&)> prune = [&](std::vector<Item>& blk) {
    for (size_t i = 0; i < blk.size();) {
      if (blk[i].loop) {
        prune(blk[i].loop->body);
        if (blk[i].loop->body.empty()) {
          blk.erase(blk.begin() + i);
          continue;
        }
      }
      ++i;
    }
  };
  prune(k.body);
  return res;
}

}  // namespace femopt
