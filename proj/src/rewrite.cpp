#include "rewrite.hpp"

#include <algorithm>

namespace femopt {

namespace {

bool contains_target(const ExprPtr& e, const std::set<std::string>& targets) {
  bool found = false;
  visit(e, [&](const ExprPtr& n) {
    if (n->kind == ExprKind::Sym && targets.count(n->name)) found = true;
  });
  return found;
}

// Sum-of-products form of `e`, distributing only across sums that involve a
// target. Each element is a product term (possibly a single factor).
std::vector<ExprPtr> expand_sum(const ExprPtr& e, const std::set<std::string>& targets) {
  if (!contains_target(e, targets)) return {e};
  switch (e->kind) {
    case ExprKind::Sym:
      return {e};
    case ExprKind::Add: {
      std::vector<ExprPtr> out;
      for (const auto& t : e->args) {
        auto part = expand_sum(t, targets);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    case ExprKind::Mul: {
      std::vector<std::vector<ExprPtr>> acc = {{}};
      for (const auto& f : e->args) {
        auto part = expand_sum(f, targets);
        std::vector<std::vector<ExprPtr>> next;
        next.reserve(acc.size() * part.size());
        for (const auto& lhs : acc)
          for (const auto& p : part) {
            auto term = lhs;
            auto fs = factors(p);
            term.insert(term.end(), fs.begin(), fs.end());
            next.push_back(std::move(term));
          }
        acc = std::move(next);
      }
      std::vector<ExprPtr> out;
      out.reserve(acc.size());
      for (auto& term : acc) out.push_back(mul(std::move(term)));
      return out;
    }
    case ExprKind::Div: {
      if (contains_target(e->args[1], targets))
        throw Error(ErrorCode::NonDistributable, "target under a division denominator");
      std::vector<ExprPtr> out;
      for (const auto& t : expand_sum(e->args[0], targets))
        out.push_back(divide(t, e->args[1]));
      return out;
    }
    case ExprKind::Call:
      throw Error(ErrorCode::NonDistributable, "target inside a function call");
    case ExprKind::Const:
      return {e};
  }
  throw Error(ErrorCode::Internal, "expand_sum: bad expr kind");
}

bool is_one(const ExprPtr& e) { return e->kind == ExprKind::Const && e->value == 1.0; }

}  // namespace

ExprPtr expand(const ExprPtr& e, const std::set<std::string>& targets) {
  auto terms = expand_sum(e, targets);
  // Group by the product of target atoms, in order of first appearance.
  struct Group {
    std::vector<ExprPtr> atoms;
    std::vector<ExprPtr> coeffs;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  for (const auto& term : terms) {
    std::vector<ExprPtr> atoms, rest;
    for (const auto& f : factors(term)) {
      if (f->kind == ExprKind::Sym && targets.count(f->name))
        atoms.push_back(f);
      else if (!is_one(f))
        rest.push_back(f);
    }
    std::vector<std::string> akeys;
    for (const auto& a : atoms) akeys.push_back(a->key());
    std::sort(akeys.begin(), akeys.end());
    std::string gk;
    for (const auto& s : akeys) gk += s + "|";
    auto it = groups.find(gk);
    if (it == groups.end()) {
      order.push_back(gk);
      std::sort(atoms.begin(), atoms.end(),
                [](const ExprPtr& a, const ExprPtr& b) { return a->key() < b->key(); });
      it = groups.emplace(gk, Group{std::move(atoms), {}}).first;
    }
    it->second.coeffs.push_back(mul(std::move(rest)));
  }
  std::vector<ExprPtr> out;
  for (const auto& gk : order) {
    Group& g = groups[gk];
    ExprPtr coeff = g.coeffs.size() == 1 ? g.coeffs[0] : add(g.coeffs);
    if (g.atoms.empty()) {
      out.push_back(coeff);
    } else {
      std::vector<ExprPtr> fs = g.atoms;
      if (!is_one(coeff)) {
        auto cf = g.coeffs.size() == 1 ? factors(coeff) : std::vector<ExprPtr>{coeff};
        fs.insert(fs.end(), cf.begin(), cf.end());
      }
      out.push_back(mul(std::move(fs)));
    }
  }
  return add(std::move(out));
}

ExprPtr normalize_sum_of_monomials(const ExprPtr& e, const std::set<std::string>& lin,
                                   const std::map<std::string, std::set<std::string>>& extra) {
  auto linear_span = [&](const ExprPtr& x) {
    auto d = effective_dep(x, extra);
    size_t n = 0;
    for (const auto& ix : lin)
      if (d.count(ix)) ++n;
    return n;
  };
  if (e->kind == ExprKind::Add) {
    std::vector<ExprPtr> out;
    for (const auto& t : e->args) {
      ExprPtr n = normalize_sum_of_monomials(t, lin, extra);
      auto ts = summands(n);
      out.insert(out.end(), ts.begin(), ts.end());
    }
    return add(std::move(out));
  }
  if (e->kind == ExprKind::Mul) {
    for (size_t i = 0; i < e->args.size(); ++i) {
      const ExprPtr& f = e->args[i];
      if (f->kind == ExprKind::Add && linear_span(f) >= 2) {
        std::vector<ExprPtr> rest;
        for (size_t j = 0; j < e->args.size(); ++j)
          if (j != i) rest.push_back(e->args[j]);
        std::vector<ExprPtr> out;
        for (const auto& t : f->args) {
          std::vector<ExprPtr> fs = rest;
          auto tf = factors(t);
          fs.insert(fs.end(), tf.begin(), tf.end());
          out.push_back(mul(std::move(fs)));
        }
        return normalize_sum_of_monomials(add(std::move(out)), lin, extra);
      }
    }
  }
  return e;
}

ExprPtr factorize(const ExprPtr& e, const std::vector<std::string>& targets) {
  if (targets.empty() || e->kind != ExprKind::Add) return e;
  const std::string& t = targets[0];
  std::vector<std::string> rest(targets.begin() + 1, targets.end());

  struct Bucket {
    ExprPtr atom;
    std::vector<ExprPtr> coeffs;
    std::vector<ExprPtr> originals;
  };
  std::vector<std::string> order;
  std::map<std::string, Bucket> buckets;
  std::vector<ExprPtr> residual;
  for (const auto& term : summands(e)) {
    auto fs = factors(term);
    auto hit = std::find_if(fs.begin(), fs.end(), [&](const ExprPtr& f) {
      return f->kind == ExprKind::Sym && f->name == t;
    });
    if (hit == fs.end()) {
      residual.push_back(term);
      continue;
    }
    ExprPtr atom = *hit;
    std::vector<ExprPtr> others;
    for (auto it = fs.begin(); it != fs.end(); ++it)
      if (it != hit) others.push_back(*it);
    auto b = buckets.find(atom->key());
    if (b == buckets.end()) {
      order.push_back(atom->key());
      b = buckets.emplace(atom->key(), Bucket{atom, {}, {}}).first;
    }
    b->second.coeffs.push_back(mul(std::move(others)));
    b->second.originals.push_back(term);
  }

  std::vector<ExprPtr> out;
  for (const auto& key : order) {
    Bucket& b = buckets[key];
    if (b.coeffs.size() < 2) {
      // A single occurrence is left as written.
      residual.insert(residual.end(), b.originals.begin(), b.originals.end());
      continue;
    }
    out.push_back(mul({b.atom, factorize(add(b.coeffs), rest)}));
  }
  if (!residual.empty()) {
    ExprPtr r = factorize(add(std::move(residual)), rest);
    auto rs = summands(r);
    out.insert(out.end(), rs.begin(), rs.end());
  }
  return add(std::move(out));
}

PlacementResult placement_for(Kernel& k, const std::vector<Loop*>& enclosing,
                              const std::set<std::string>& dep) {
  PlacementResult r;
  r.block = &k.body;
  r.pos = 0;
  std::set<std::string> entered;
  size_t depth = 0;
  for (; depth < enclosing.size(); ++depth) {
    Loop* l = enclosing[depth];
    // Position of this loop inside the current block.
    size_t at = 0;
    for (; at < r.block->size(); ++at)
      if ((*r.block)[at].loop.get() == l) break;
    if (at == r.block->size())
      throw Error(ErrorCode::Internal, "placement: loop not found in its block");
    if (!dep.count(l->index)) {
      r.pos = at;
      break;
    }
    entered.insert(l->index);
    r.block = &l->body;
    r.pos = l->body.size();
  }
  r.full_descent = depth == enclosing.size();
  // Remaining needed indices become subscripts, ordered like the kernel's
  // loop declarations (alphabetically for undeclared ones).
  std::vector<std::string> remaining;
  for (const auto& ix : dep)
    if (!entered.count(ix)) remaining.push_back(ix);
  auto decl_pos = [&](const std::string& ix) {
    for (size_t i = 0; i < k.loop_decls.size(); ++i)
      if (k.loop_decls[i].first == ix) return static_cast<long>(i);
    return static_cast<long>(k.loop_decls.size());
  };
  std::sort(remaining.begin(), remaining.end(), [&](const auto& a, const auto& b) {
    long pa = decl_pos(a), pb = decl_pos(b);
    return pa != pb ? pa < pb : a < b;
  });
  r.array_dims = std::move(remaining);
  return r;
}

Hoister::Hoister(Kernel& k, std::string prefix) : k_(k), prefix_(std::move(prefix)) {
  for (const auto& [n, t] : k.tables) used_names_.insert(n);
  for (const auto& [n, v] : k.constants) used_names_.insert(n);
  for (const auto& o : k.outputs) used_names_.insert(o);
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    used_names_.insert(s.lhs->name);
    visit(s.rhs, [&](const ExprPtr& n) {
      if (n->kind == ExprKind::Sym) used_names_.insert(n->name);
    });
  });
}

HoistResult Hoister::hoist(const std::vector<Loop*>& enclosing, const ExprPtr& value,
                           const std::set<std::string>& dep) {
  PlacementResult p = placement_for(k_, enclosing, dep);
  std::vector<Loop*> chain;
  for (Loop* l : enclosing) {
    if (!dep.count(l->index)) break;
    chain.push_back(l);
  }
  std::vector<Item>* block = p.block;
  size_t pos = p.pos;
  if (p.full_descent) {
    // Same-block definition: as early as possible, but after every
    // statement defining a symbol the value reads and after earlier hoists.
    std::set<std::string> reads;
    visit(value, [&](const ExprPtr& n) {
      if (n->kind == ExprKind::Sym) reads.insert(n->name);
    });
    pos = 0;
    for (size_t i = 0; i < block->size(); ++i) {
      const auto& it = (*block)[i];
      if (it.stmt &&
          (created_.count(it.stmt->lhs->name) || reads.count(it.stmt->lhs->name)))
        pos = i + 1;
    }
  }
  for (const auto& ix : p.array_dims) {
    Loop* reuse = nullptr;
    if (pos > 0 && (*block)[pos - 1].loop &&
        (*block)[pos - 1].loop->index == ix &&
        created_loops_.count((*block)[pos - 1].loop.get()))
      reuse = (*block)[pos - 1].loop.get();
    if (!reuse) {
      auto l = std::make_shared<Loop>();
      const Loop* model = find_loop(k_, ix);
      l->index = ix;
      l->begin = 0;
      l->end = k_.extents.at(ix);
      l->cls = model ? model->cls : LoopClass::Plain;
      block->insert(block->begin() + pos, Item{nullptr, l});
      ++pos;
      created_loops_.insert(l.get());
      reuse = l.get();
    }
    chain.push_back(reuse);
    block = &reuse->body;
    pos = block->size();
  }

  HoistResult out;
  out.chain = std::move(chain);
  auto cached = cache_.find({block, value->key()});
  if (cached != cache_.end()) {
    out.replacement = cached->second;
    return out;
  }
  std::string name;
  do {
    name = prefix_ + std::to_string(counter_++);
  } while (used_names_.count(name));
  used_names_.insert(name);
  created_.insert(name);
  auto s = std::make_shared<Statement>();
  s->lhs = sym(name, p.array_dims);
  s->rhs = value;
  block->insert(block->begin() + pos, Item{s, nullptr});
  out.stmt = s.get();
  out.replacement = sym(name, p.array_dims);
  cache_.emplace(std::make_pair(static_cast<const void*>(block), value->key()),
                 out.replacement);
  return out;
}

Kernel code_motion(const Kernel& k) {
  Kernel out = k.clone();
  std::set<std::string> orderfree_ix;
  for_each_statement(out, [&](const std::vector<const Loop*>& chain, const Statement&) {
    for (const auto* l : chain)
      if (l->cls == LoopClass::OrderFree) orderfree_ix.insert(l->index);
  });
  Hoister h(out, "m");

  struct Work {
    std::shared_ptr<Statement> stmt;
    std::vector<Loop*> chain;
  };
  std::vector<Work> work;
  for_each_statement(out, [&](const std::vector<Loop*>& chain, std::vector<Item>& block,
                              size_t pos, Statement&) {
    work.push_back({block[pos].stmt, chain});
  });

  while (!work.empty()) {
    Work w = work.front();
    work.erase(work.begin());
    auto extra = effective_extra_deps(out);
    std::set<std::string> enc;
    for (Loop* l : w.chain) enc.insert(l->index);

    std::function<ExprPtr(const ExprPtr&, bool)> go = [&](const ExprPtr& e,
                                                          bool is_root) -> ExprPtr {
      if (is_atom(e)) return e;
      std::set<std::string> d = effective_dep(e, extra);
      bool invariant = d.size() < enc.size() &&
                       std::includes(enc.begin(), enc.end(), d.begin(), d.end());
      // Hoisting the entire right-hand side of an assignment would just chain
      // temporaries; descend instead.
      if (invariant && !(is_root && !w.stmt->aug)) {
        PlacementResult p = placement_for(out, w.chain, d);
        bool touches_orderfree = false;
        for (const auto& ix : p.array_dims)
          if (orderfree_ix.count(ix)) touches_orderfree = true;
        if (!touches_orderfree && !p.full_descent) {
          HoistResult hr = h.hoist(w.chain, e, d);
          if (hr.stmt) {
            // The new definition may itself contain hoistable parts; recover
            // its shared_ptr for the worklist.
            std::shared_ptr<Statement> sp;
            std::vector<Item>* blk =
                hr.chain.empty() ? &out.body : &hr.chain.back()->body;
            for (auto& item : *blk)
              if (item.stmt.get() == hr.stmt) sp = item.stmt;
            work.push_back({sp, hr.chain});
          }
          return hr.replacement;
        }
      }
      bool changed = false;
      std::vector<ExprPtr> args;
      args.reserve(e->args.size());
      for (const auto& a : e->args) {
        ExprPtr r = go(a, false);
        if (r != a) changed = true;
        args.push_back(std::move(r));
      }
      if (!changed) return e;
      switch (e->kind) {
        case ExprKind::Add: return add(std::move(args));
        case ExprKind::Mul: return mul(std::move(args));
        case ExprKind::Div: return divide(args[0], args[1]);
        case ExprKind::Call: return call(e->name, std::move(args));
        default: throw Error(ErrorCode::Internal, "code_motion: bad kind");
      }
    };
    w.stmt->rhs = go(w.stmt->rhs, true);
  }
  return out;
}

}  // namespace femopt
