#include "kernel.hpp"

#include <algorithm>
#include <cassert>

namespace femopt {

std::string loop_class_name(LoopClass c) {
  switch (c) {
    case LoopClass::OrderFree: return "orderfree";
    case LoopClass::Reduction: return "reduction";
    case LoopClass::Linear: return "linear";
    case LoopClass::Plain: return "plain";
  }
  return "?";
}

namespace {

Item clone_item(const Item& it) {
  Item out;
  if (it.stmt) {
    out.stmt = std::make_shared<Statement>(*it.stmt);
  } else {
    out.loop = std::make_shared<Loop>();
    out.loop->index = it.loop->index;
    out.loop->cls = it.loop->cls;
    out.loop->declared = it.loop->declared;
    out.loop->begin = it.loop->begin;
    out.loop->end = it.loop->end;
    out.loop->body.reserve(it.loop->body.size());
    for (const auto& c : it.loop->body) out.loop->body.push_back(clone_item(c));
  }
  return out;
}

}  // namespace

Kernel Kernel::clone() const {
  Kernel out = *this;
  out.body.clear();
  out.body.reserve(body.size());
  for (const auto& it : body) out.body.push_back(clone_item(it));
  return out;
}

namespace {

void walk(std::vector<Item>& block, std::vector<Loop*>& chain, const StmtVisitor& fn) {
  // Index-based: the visitor may insert items before the current position in
  // *other* blocks, but must not mutate `block` itself.
  for (size_t i = 0; i < block.size(); ++i) {
    Item& it = block[i];
    if (it.stmt) {
      fn(chain, block, i, *it.stmt);
    } else {
      chain.push_back(it.loop.get());
      walk(it.loop->body, chain, fn);
      chain.pop_back();
    }
  }
}

}  // namespace

void for_each_statement(Kernel& k, const StmtVisitor& fn) {
  std::vector<Loop*> chain;
  walk(k.body, chain, fn);
}

void for_each_statement(const Kernel& k,
                        const std::function<void(const std::vector<const Loop*>&,
                                                 const Statement&)>& fn) {
  std::vector<const Loop*> chain;
  std::function<void(const std::vector<Item>&)> rec = [&](const std::vector<Item>& block) {
    for (const auto& it : block) {
      if (it.stmt) {
        fn(chain, *it.stmt);
      } else {
        chain.push_back(it.loop.get());
        rec(it.loop->body);
        chain.pop_back();
      }
    }
  };
  rec(k.body);
}

namespace {

Loop* find_loop_in(std::vector<Item>& block, const std::string& index) {
  for (auto& it : block) {
    if (!it.loop) continue;
    if (it.loop->index == index) return it.loop.get();
    if (Loop* l = find_loop_in(it.loop->body, index)) return l;
  }
  return nullptr;
}

}  // namespace

Loop* find_loop(Kernel& k, const std::string& index) { return find_loop_in(k.body, index); }

const Loop* find_loop(const Kernel& k, const std::string& index) {
  return find_loop_in(const_cast<Kernel&>(k).body, index);
}

std::map<std::string, std::set<std::string>> effective_extra_deps(const Kernel& k) {
  std::map<std::string, std::set<std::string>> extra;
  for_each_statement(k, [&](const std::vector<const Loop*>& chain, const Statement& s) {
    if (k.tables.count(s.lhs->name) || k.constants.count(s.lhs->name)) return;
    std::set<std::string> d;
    for (const auto* l : chain) d.insert(l->index);
    auto rd = effective_dep(s.rhs, extra);
    d.insert(rd.begin(), rd.end());
    for (const auto& ix : s.lhs->indices) d.erase(ix);
    extra[s.lhs->name].insert(d.begin(), d.end());
  });
  return extra;
}

std::set<std::string> effective_dep(const ExprPtr& e,
                                    const std::map<std::string, std::set<std::string>>& extra) {
  std::set<std::string> out = e->dep;
  visit(e, [&](const ExprPtr& n) {
    if (n->kind != ExprKind::Sym) return;
    auto it = extra.find(n->name);
    if (it != extra.end()) out.insert(it->second.begin(), it->second.end());
  });
  return out;
}

namespace {

// All statements strictly inside `loop` (any depth).
std::vector<const Statement*> subtree_statements(const Loop& loop) {
  std::vector<const Statement*> out;
  std::function<void(const std::vector<Item>&)> rec = [&](const std::vector<Item>& block) {
    for (const auto& it : block) {
      if (it.stmt)
        out.push_back(it.stmt.get());
      else
        rec(it.loop->body);
    }
  };
  rec(loop.body);
  return out;
}

// Distinct symbol occurrences (by key) in `e` whose subscripts include `ix`.
std::vector<ExprPtr> symbols_using_index(const ExprPtr& e, const std::string& ix) {
  std::map<std::string, ExprPtr> seen;
  visit(e, [&](const ExprPtr& n) {
    if (n->kind != ExprKind::Sym) return;
    if (std::find(n->indices.begin(), n->indices.end(), ix) != n->indices.end())
      seen.emplace(n->key(), n);
  });
  std::vector<ExprPtr> out;
  for (auto& [k, v] : seen) out.push_back(v);
  return out;
}

}  // namespace

LoopClass classify_loop(const Kernel& k, const std::string& index) {
  const Loop* loop = find_loop(k, index);
  if (!loop) throw Error(ErrorCode::UnknownLoop, "no loop with index '" + index + "'");
  auto stmts = subtree_statements(*loop);

  // Reduction: the index subscripts no assignment target, and at least one
  // accumulation reads it on the right-hand side.
  bool on_lhs = false, accumulated = false, used = false, any_aug = false;
  for (const auto* s : stmts) {
    if (std::find(s->lhs->indices.begin(), s->lhs->indices.end(), index) != s->lhs->indices.end())
      on_lhs = used = true;
    if (s->rhs->dep.count(index)) used = true;
    if (s->aug) any_aug = true;
    if (s->aug && s->rhs->dep.count(index)) accumulated = true;
  }
  if (!on_lhs && accumulated) return LoopClass::Reduction;
  // A loop whose index appears nowhere but whose body accumulates is a pure
  // repetition of the accumulation: treat it as a reduction.
  if (!used && any_aug && !stmts.empty()) return LoopClass::Reduction;

  // Linear: every statement in the subtree is affine in each symbol
  // subscripted by the index.
  bool affine = true;
  for (const auto* s : stmts) {
    for (const auto& symb : symbols_using_index(s->rhs, index)) {
      if (sym_degree(s->rhs, symb->key()) > 1) {
        affine = false;
        break;
      }
    }
    if (!affine) break;
  }
  if (affine) return LoopClass::Linear;
  return LoopClass::Plain;
}

bool is_multilinear(const Kernel& k, const std::vector<std::string>& indices) {
  if (indices.empty()) return false;
  // The loops must form a chain, outermost first; hoisted statements may sit
  // between levels, but never a second loop.
  const Loop* cur = find_loop(k, indices[0]);
  if (!cur) throw Error(ErrorCode::UnknownLoop, "no loop with index '" + indices[0] + "'");
  for (size_t n = 1; n < indices.size(); ++n) {
    const Loop* child = nullptr;
    for (const auto& it : cur->body) {
      if (!it.loop) continue;
      if (child) return false;
      child = it.loop.get();
    }
    if (!child || child->index != indices[n]) return false;
    cur = child;
  }
  for (const auto& it : cur->body)
    if (it.loop) return false;  // innermost body must be straight-line
  for (const auto& ix : indices)
    if (classify_loop(k, ix) != LoopClass::Linear) return false;
  return true;
}

namespace {

// Checks the innermost block is free of intra-block data dependences: no
// statement reads a value another one writes and no two write the same
// location.
void check_independent(const std::vector<Item>& block) {
  std::set<std::string> written_names, written_locs;
  for (const auto& it : block) {
    const Statement& s = *it.stmt;
    bool reads_written = false;
    visit(s.rhs, [&](const ExprPtr& n) {
      if (n->kind == ExprKind::Sym && written_names.count(n->name)) reads_written = true;
    });
    if (reads_written || !written_locs.insert(s.lhs->key()).second)
      throw Error(ErrorCode::NotFemNest,
                  "innermost block statements are not independent");
    written_names.insert(s.lhs->name);
  }
}

}  // namespace

Validated validate_fem_nest(const Kernel& k) {
  Validated v;
  v.k = k.clone();
  Kernel& kk = v.k;

  // Apply declared classes to the tree and check them against inference.
  std::function<void(std::vector<Item>&)> tag = [&](std::vector<Item>& block) {
    for (auto& it : block) {
      if (!it.loop) continue;
      LoopClass inferred = classify_loop(kk, it.loop->index);
      if (it.loop->declared) {
        if (it.loop->cls != LoopClass::OrderFree && it.loop->cls != inferred)
          throw Error(ErrorCode::NotFemNest,
                      "loop '" + it.loop->index + "' declared " +
                          loop_class_name(it.loop->cls) + " but classifies as " +
                          loop_class_name(inferred));
      } else {
        it.loop->cls = inferred;
      }
      tag(it.loop->body);
    }
  };
  tag(kk.body);

  auto check_side = [&](Loop* s) {
    std::vector<std::string> ixs;
    Loop* l = s;
    ixs.push_back(l->index);
    while (l->body.size() == 1 && l->body[0].loop &&
           l->body[0].loop->cls == LoopClass::Linear) {
      l = l->body[0].loop.get();
      ixs.push_back(l->index);
    }
    if (!is_multilinear(kk, ixs))
      throw Error(ErrorCode::NotFemNest, "side nest at '" + s->index + "' is not multilinear");
    check_independent(l->body);
    v.side_nests.push_back(std::move(ixs));
  };

  // Top level: preheader statements plus one primary nest and, when no
  // order-free loop exists, possibly side multilinear nests left by earlier
  // passes.
  std::vector<Loop*> tops;
  for (auto& it : kk.body) {
    if (it.stmt) {
      if (!it.stmt->rhs->dep.empty())
        throw Error(ErrorCode::NotFemNest, "top-level statement depends on a loop index");
      continue;
    }
    tops.push_back(it.loop.get());
  }
  if (tops.empty()) throw Error(ErrorCode::NotFemNest, "kernel has no loop");

  Loop* cur = nullptr;
  if (tops.size() == 1) {
    cur = tops[0];
  } else {
    Loop* red = nullptr;
    std::vector<Loop*> side;
    for (Loop* l : tops) {
      if (l->cls == LoopClass::Reduction) {
        if (red) throw Error(ErrorCode::NotFemNest, "more than one reduction loop");
        red = l;
      } else if (l->cls == LoopClass::Linear) {
        side.push_back(l);
      } else {
        throw Error(ErrorCode::NotFemNest, "more than one top-level loop");
      }
    }
    if (!red) throw Error(ErrorCode::NotFemNest, "multiple nests but no reduction loop");
    for (Loop* s : side) check_side(s);
    cur = red;
  }

  if (cur->cls == LoopClass::OrderFree) {
    v.orderfree = cur->index;
    // The order-free body holds statements, at most one reduction loop, and
    // any number of side multilinear nests.
    Loop* next = nullptr;
    std::vector<Loop*> side;
    for (auto& it : cur->body) {
      if (it.stmt) continue;
      LoopClass c = it.loop->cls;
      if (c == LoopClass::Reduction) {
        if (next) throw Error(ErrorCode::NotFemNest, "more than one reduction loop");
        next = it.loop.get();
      } else if (c == LoopClass::Linear) {
        side.push_back(it.loop.get());
      } else {
        throw Error(ErrorCode::NotFemNest,
                    "loop '" + it.loop->index + "' under the order-free loop is " +
                        loop_class_name(c));
      }
    }
    if (!next && side.size() == 1) {
      // No reduction: the single linear nest is the primary one.
      next = side[0];
      side.clear();
    } else if (!next && side.empty()) {
      throw Error(ErrorCode::NotFemNest, "order-free loop contains no nest");
    } else if (!next) {
      throw Error(ErrorCode::NotFemNest, "multiple nests but no reduction loop");
    }
    for (Loop* s : side) check_side(s);
    cur = next;
  }

  if (cur->cls == LoopClass::Reduction) {
    v.reduction = cur->index;
    Loop* next = nullptr;
    for (auto& it : cur->body) {
      if (it.stmt) {
        v.reduction_perfect = false;
        continue;
      }
      if (next) throw Error(ErrorCode::NotFemNest, "more than one nest under the reduction loop");
      next = it.loop.get();
    }
    if (!next) throw Error(ErrorCode::NotFemNest, "reduction loop contains no linear nest");
    cur = next;
  }

  // Multilinear chain; hoisted statements may precede each inner level.
  std::vector<std::string> lin;
  Loop* l = cur;
  lin.push_back(l->index);
  for (;;) {
    Loop* child = nullptr;
    bool multiple = false;
    for (auto& it : l->body) {
      if (!it.loop) continue;
      if (child) multiple = true;
      child = it.loop.get();
    }
    if (!child || multiple || child->cls != LoopClass::Linear) break;
    l = child;
    lin.push_back(l->index);
  }
  if (lin.size() > 2)
    throw Error(ErrorCode::NotFemNest, "multilinear nest of arity > 2 is not supported");
  if (!is_multilinear(kk, lin))
    throw Error(ErrorCode::NotFemNest, "nest at '" + cur->index + "' is not multilinear");
  check_independent(l->body);
  v.linear = std::move(lin);
  v.arity = static_cast<int>(v.linear.size());
  return v;
}

// ---------------------------------------------------------------------------
// Operation counting.

namespace {

struct CseNode {
  ExprKind kind;
  std::vector<std::string> child_keys;  // Add/Mul/Div/Call operand keys
};

void gather(const ExprPtr& e, std::map<std::string, CseNode>& nodes) {
  if (is_atom(e)) return;
  for (const auto& a : e->args) gather(a, nodes);
  auto& n = nodes[e->key()];
  n.kind = e->kind;
  n.child_keys.clear();
  for (const auto& a : e->args) n.child_keys.push_back(a->key());
}

std::string mul_key(std::vector<std::string> keys) {
  std::sort(keys.begin(), keys.end());
  std::string k = "(*";
  for (const auto& s : keys) {
    k += ' ';
    k += s;
  }
  k += ')';
  return k;
}

// Fuses factor pairs shared between distinct products so a pair evaluated in
// several n-ary multiplies is charged once. Greedy: most frequent pair first,
// lexicographic tie-break, repeated while any pair occurs at least twice.
void fuse_shared_pairs(std::map<std::string, CseNode>& nodes) {
  for (;;) {
    std::map<std::pair<std::string, std::string>, int> freq;
    for (const auto& [key, n] : nodes) {
      if (n.kind != ExprKind::Mul || n.child_keys.size() < 3) continue;
      std::vector<std::string> ck = n.child_keys;
      std::sort(ck.begin(), ck.end());
      for (size_t a = 0; a < ck.size(); ++a)
        for (size_t b = a + 1; b < ck.size(); ++b)
          if (ck[a] != ck[b]) ++freq[{ck[a], ck[b]}];
    }
    std::pair<std::string, std::string> best;
    int best_n = 1;
    for (const auto& [p, n] : freq)
      if (n > best_n || (n == best_n && best_n > 1 && p < best)) {
        best = p;
        best_n = n;
      }
    if (best_n < 2) return;

    std::string gk = mul_key({best.first, best.second});
    std::map<std::string, CseNode> next;
    for (auto& [key, n] : nodes) {
      if (n.kind != ExprKind::Mul || n.child_keys.size() < 3) {
        next.emplace(key, std::move(n));
        continue;
      }
      auto a = std::find(n.child_keys.begin(), n.child_keys.end(), best.first);
      auto b = std::find(n.child_keys.begin(), n.child_keys.end(), best.second);
      if (a == n.child_keys.end() || b == n.child_keys.end()) {
        next.emplace(key, std::move(n));
        continue;
      }
      std::vector<std::string> ck;
      for (const auto& c : n.child_keys)
        if (c != best.first && c != best.second) ck.push_back(c);
      ck.push_back(gk);
      // Re-key so products made identical by fusion collapse together.
      std::string nk = mul_key(ck);
      next.emplace(std::move(nk), CseNode{ExprKind::Mul, std::move(ck)});
    }
    next.emplace(gk, CseNode{ExprKind::Mul, {best.first, best.second}});
    nodes = std::move(next);
  }
}

}  // namespace

unsigned long long block_flops(const std::vector<const Statement*>& stmts, int call_cost) {
  std::map<std::string, CseNode> nodes;
  unsigned long long total = 0;
  for (const auto* s : stmts) {
    gather(s->rhs, nodes);
    if (s->aug) ++total;  // the running accumulation
  }
  fuse_shared_pairs(nodes);
  for (const auto& [key, n] : nodes) {
    switch (n.kind) {
      case ExprKind::Add:
      case ExprKind::Mul:
        total += n.child_keys.size() - 1;
        break;
      case ExprKind::Div:
        total += 1;
        break;
      case ExprKind::Call:
        total += call_cost;
        break;
      default:
        break;
    }
  }
  return total;
}

namespace {

unsigned long long count_block(const std::vector<Item>& block, int call_cost) {
  unsigned long long total = 0;
  std::vector<const Statement*> stmts;
  for (const auto& it : block) {
    if (it.stmt) {
      stmts.push_back(it.stmt.get());
    } else {
      long trips = std::max<long>(0, it.loop->end - it.loop->begin);
      total += static_cast<unsigned long long>(trips) * count_block(it.loop->body, call_cost);
    }
  }
  total += block_flops(stmts, call_cost);
  return total;
}

}  // namespace

unsigned long long flop_count(const Kernel& k) { return count_block(k.body, k.call_cost); }

bool dce(Kernel& k) {
  bool any = false;
  for (;;) {
    std::set<std::string> read;
    for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
      visit(s.rhs, [&](const ExprPtr& n) {
        if (n->kind == ExprKind::Sym) read.insert(n->name);
      });
    });
    bool removed = false;
    std::function<void(std::vector<Item>&)> sweep = [&](std::vector<Item>& block) {
      for (size_t i = 0; i < block.size();) {
        Item& it = block[i];
        if (it.stmt) {
          const std::string& n = it.stmt->lhs->name;
          if (!k.outputs.count(n) && !read.count(n) && !k.tables.count(n)) {
            block.erase(block.begin() + i);
            removed = true;
            continue;
          }
        } else {
          sweep(it.loop->body);
          if (it.loop->body.empty()) {
            block.erase(block.begin() + i);
            removed = true;
            continue;
          }
        }
        ++i;
      }
    };
    sweep(k.body);
    if (!removed) return any;
    any = true;
  }
}

}  // namespace femopt
