#include "cost.hpp"

#include <algorithm>

#include "sharing.hpp"

namespace femopt {

Kernel strip_to_monomials(const Validated& v, const std::vector<size_t>& keep) {
  Kernel k = v.k.clone();
  std::set<size_t> keep_set(keep.begin(), keep.end());
  auto monos = split_monomials(v);

  std::map<std::string, std::vector<const Monomial*>> per_stmt;
  for (const auto& m : monos) per_stmt[m.stmt_lhs].push_back(&m);

  std::vector<std::pair<std::vector<Item>*, size_t>> to_erase;
  for_each_statement(k, [&](const std::vector<Loop*>& chain, std::vector<Item>& block,
                            size_t pos, Statement& s) {
    auto it = per_stmt.find(s.lhs->key());
    if (it == per_stmt.end()) return;
    if (chain.empty() || chain.back()->cls != LoopClass::Linear) return;
    std::vector<ExprPtr> kept;
    for (const Monomial* m : it->second)
      if (keep_set.count(m->index)) kept.push_back(m->expr);
    if (kept.empty())
      to_erase.emplace_back(&block, pos);
    else
      s.rhs = add(std::move(kept));
  });
  for (auto it = to_erase.rbegin(); it != to_erase.rend(); ++it)
    it->first->erase(it->first->begin() + it->second);

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
  dce(k);

  // Classes other than order-free are re-inferred on the reduced kernel.
  std::function<void(std::vector<Item>&)> relax = [&](std::vector<Item>& blk) {
    for (auto& it : blk) {
      if (!it.loop) continue;
      if (it.loop->cls != LoopClass::OrderFree) it.loop->declared = false;
      relax(it.loop->body);
    }
  };
  relax(k.body);
  return k;
}

unsigned long long theta_se(const Validated& v, const std::vector<size_t>& keep) {
  Kernel stripped = strip_to_monomials(v, keep);
  bool has_stmt = false;
  for_each_statement(stripped, [&](const std::vector<const Loop*>&, const Statement&) {
    has_stmt = true;
  });
  if (!has_stmt) return 0;
  bool has_loop = false;
  for (const auto& it : stripped.body)
    if (it.loop) has_loop = true;
  if (!has_loop) return flop_count(stripped);
  Validated vs = validate_fem_nest(stripped);
  Kernel out = sharing_elimination(vs);
  dce(out);
  return flop_count(out);
}

ThetaPre theta_pre(const Validated& v, const std::vector<size_t>& chosen) {
  ThetaPre r;
  if (v.reduction.empty()) {
    r.rejected = true;
    r.reason = "no reduction loop";
    return r;
  }
  auto monos = split_monomials(v);
  unsigned long long red_extent =
      static_cast<unsigned long long>(v.k.extents.at(v.reduction));
  for (size_t ci : chosen) {
    const Monomial& m = monos.at(ci);
    if (!m.separable) {
      r.rejected = true;
      r.reason = m.reject;
      return r;
    }
    if (m.kmix > 0 && m.iota >= red_extent) {
      r.rejected = true;
      r.reason = "growth factor " + std::to_string(m.iota) +
                 " reaches the reduction extent " + std::to_string(red_extent);
      return r;
    }
  }
  if (chosen.empty()) return r;

  // Structural dry run on a clone holding only the chosen monomials.
  Kernel stripped = strip_to_monomials(v, chosen);
  Validated vs = validate_fem_nest(stripped);
  // Monomial indices renumber inside the stripped kernel: all of them are in.
  auto smonos = split_monomials(vs);
  std::vector<size_t> all;
  for (const auto& m : smonos) all.push_back(m.index);
  PreevalResult pr = preevaluate(vs, all, /*structural=*/true);
  dce(pr.k);
  r.flops = flop_count(pr.k);
  r.table_bytes = pr.table_bytes;
  return r;
}

unsigned long long memory_footprint(const Kernel& k) {
  unsigned long long bytes = 0;
  std::set<std::string> orderfree_ix, counted;
  std::function<void(const std::vector<Item>&)> scan_of = [&](const std::vector<Item>& blk) {
    for (const auto& it : blk) {
      if (!it.loop) continue;
      if (it.loop->cls == LoopClass::OrderFree) orderfree_ix.insert(it.loop->index);
      scan_of(it.loop->body);
    }
  };
  scan_of(k.body);
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    const std::string& name = s.lhs->name;
    if (k.outputs.count(name) || k.tables.count(name)) return;
    if (!counted.insert(name).second) return;
    unsigned long long n = 1;
    for (const auto& ix : s.lhs->indices) {
      if (orderfree_ix.count(ix))
        throw Error(ErrorCode::InconsistentLayout,
                    "temporary '" + name + "' subscripted by order-free index '" + ix + "'");
      n *= static_cast<unsigned long long>(k.extents.at(ix));
    }
    bytes += n * sizeof(double);
  });
  for (const auto& [name, t] : k.tables)
    if (t.prov == Table::Prov::Preevaluated) bytes += t.values.size() * sizeof(double);
  return bytes;
}

}  // namespace femopt
