#include "zeroskip.hpp"

#include <algorithm>

namespace femopt {

namespace {

Spans full_span(long n) { return {{0, n}}; }

Spans intersect(const Spans& a, const Spans& b) {
  Spans out;
  for (const auto& [a0, a1] : a)
    for (const auto& [b0, b1] : b) {
      long lo = std::max(a0, b0), hi = std::min(a1, b1);
      if (lo < hi) out.emplace_back(lo, hi);
    }
  std::sort(out.begin(), out.end());
  return out;
}

Spans unite(const Spans& a, const Spans& b) {
  Spans all = a;
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  Spans out;
  for (const auto& [lo, hi] : all) {
    if (!out.empty() && lo <= out.back().second)
      out.back().second = std::max(out.back().second, hi);
    else
      out.emplace_back(lo, hi);
  }
  return out;
}

bool covers(const Spans& s, long lo, long hi) {
  for (const auto& [a, b] : s)
    if (a <= lo && hi <= b) return true;
  return false;
}

using Layout = std::map<std::string, std::map<std::string, Spans>>;

// Nonzero spans a product factor admits along index `ix`: only a bare symbol
// subscripted by `ix` can prove zeros. Compound factors could hide division
// or calls, where a zero operand does not make the value zero.
Spans factor_spans(const ExprPtr& f, const std::string& ix, long extent,
                   const Layout& layout) {
  if (f->kind != ExprKind::Sym) return full_span(extent);
  auto it = layout.find(f->name);
  if (it == layout.end()) return full_span(extent);
  if (std::find(f->indices.begin(), f->indices.end(), ix) == f->indices.end())
    return full_span(extent);
  auto dim = it->second.find(ix);
  if (dim == it->second.end()) return full_span(extent);
  return dim->second;
}

Spans monomial_spans(const ExprPtr& term, const std::string& ix, long extent,
                     const Layout& layout) {
  Spans s = full_span(extent);
  for (const auto& f : factors(term)) s = intersect(s, factor_spans(f, ix, extent, layout));
  return s;
}

std::vector<const Statement*> subtree_statements(const Loop& l) {
  std::vector<const Statement*> out;
  std::function<void(const std::vector<Item>&)> rec = [&](const std::vector<Item>& blk) {
    for (const auto& it : blk) {
      if (it.stmt)
        out.push_back(it.stmt.get());
      else
        rec(it.loop->body);
    }
  };
  rec(l.body);
  return out;
}

// Rebuilds a copy of `blk` keeping, in each statement, only the summands
// active across [lo, hi) along `ix`; empty statements and loops drop out.
std::vector<Item> specialize(const std::vector<Item>& blk, const std::string& ix, long lo,
                             long hi, long extent, const Layout& layout) {
  std::vector<Item> out;
  for (const auto& it : blk) {
    if (it.stmt) {
      std::vector<ExprPtr> kept;
      for (const auto& term : summands(it.stmt->rhs))
        if (covers(monomial_spans(term, ix, extent, layout), lo, hi)) kept.push_back(term);
      if (kept.empty()) continue;
      auto s = std::make_shared<Statement>(*it.stmt);
      s->rhs = add(std::move(kept));
      out.push_back(Item{s, nullptr});
    } else {
      auto l = std::make_shared<Loop>(*it.loop);
      l->body = specialize(it.loop->body, ix, lo, hi, extent, layout);
      if (l->body.empty()) continue;
      out.push_back(Item{nullptr, l});
    }
  }
  return out;
}

void process_block(Kernel& k, std::vector<Item>& blk, Layout& layout);

void process_loop(Kernel& k, std::vector<Item>& blk, size_t pos, Layout& layout) {
  Loop& l = *blk[pos].loop;
  long extent = l.end - l.begin;
  if (l.cls != LoopClass::Linear || extent <= 0) {
    process_block(k, l.body, layout);
    return;
  }
  const std::string& ix = l.index;

  // Per-statement activity along this loop; temporaries defined inside
  // acquire their own nonzero spans for later consumers.
  Spans active;
  std::set<long> cuts = {l.begin, l.end};
  bool splittable = true;
  for (const Statement* s : subtree_statements(l)) {
    Spans stmt_spans;
    for (const auto& term : summands(s->rhs)) {
      Spans ms = monomial_spans(term, ix, l.end, layout);
      // Clip to the loop's own range.
      ms = intersect(ms, {{l.begin, l.end}});
      for (const auto& [a, b] : ms) {
        cuts.insert(a);
        cuts.insert(b);
      }
      stmt_spans = unite(stmt_spans, ms);
    }
    active = unite(active, stmt_spans);
    bool writes_ix = std::find(s->lhs->indices.begin(), s->lhs->indices.end(), ix) !=
                     s->lhs->indices.end();
    if (writes_ix && !k.outputs.count(s->lhs->name) && !k.tables.count(s->lhs->name)) {
      // Temporary defined along ix: entries outside its activity stay zero
      // only if it starts zeroed, which holds when the loop is split (the
      // skipped entries are never read with nonzero co-factors; record them).
      layout[s->lhs->name][ix] = stmt_spans;
    }
    if (!writes_ix && s->lhs->indices.empty() && s->aug) {
      // A scalar accumulation inside the loop must see every iteration its
      // summands are active in; splitting is still fine since inactive
      // iterations contribute exact zeros. Nothing to do.
    }
  }

  // Even when the union of summand spans covers the whole range, interior
  // breakpoints mean some summand is restricted and splitting specializes
  // each segment to its active summands.
  bool whole = covers(active, l.begin, l.end);
  if (whole && cuts.size() <= 2) {
    process_block(k, l.body, layout);
    return;
  }
  if (!splittable || active.empty()) {
    if (active.empty()) {
      blk.erase(blk.begin() + pos);
      return;
    }
    process_block(k, l.body, layout);
    return;
  }

  // Split on the refined breakpoints; keep segments intersecting activity.
  std::vector<long> bp(cuts.begin(), cuts.end());
  std::vector<Item> pieces;
  for (size_t i = 0; i + 1 < bp.size(); ++i) {
    long lo = bp[i], hi = bp[i + 1];
    if (intersect(active, {{lo, hi}}).empty()) continue;
    auto seg = std::make_shared<Loop>(l);
    seg->begin = lo;
    seg->end = hi;
    seg->body = specialize(l.body, ix, lo, hi, l.end, layout);
    if (seg->body.empty()) continue;
    pieces.push_back(Item{nullptr, seg});
  }
  blk.erase(blk.begin() + pos);
  for (size_t i = 0; i < pieces.size(); ++i) blk.insert(blk.begin() + pos + i, pieces[i]);
  // Recurse into the inner loops of each piece.
  for (size_t i = 0; i < pieces.size(); ++i)
    process_block(k, pieces[i].loop->body, layout);
}

void process_block(Kernel& k, std::vector<Item>& blk, Layout& layout) {
  for (size_t i = 0; i < blk.size();) {
    if (!blk[i].loop) {
      ++i;
      continue;
    }
    size_t before = blk.size();
    process_loop(k, blk, i, layout);
    if (blk.size() >= before)
      i += blk.size() - before + 1;  // past the loop or its pieces
    // else the loop was removed: the next item is already at i
  }
}

}  // namespace

std::map<std::string, std::map<std::string, Spans>> detect_zero_blocks(const Kernel& k) {
  Layout layout;
  for (const auto& [name, t] : k.tables) {
    std::vector<long> extents;
    for (const auto& d : t.dims) extents.push_back(k.extents.at(d));
    for (size_t di = 0; di < t.dims.size(); ++di) {
      long n = extents[di];
      std::vector<bool> nonzero(static_cast<size_t>(std::max<long>(n, 0)), false);
      size_t stride = 1;
      for (size_t dj = di + 1; dj < t.dims.size(); ++dj)
        stride *= static_cast<size_t>(extents[dj]);
      for (size_t off = 0; off < t.values.size(); ++off) {
        if (t.values[off] == 0.0) continue;
        size_t coord = (off / stride) % static_cast<size_t>(std::max<long>(n, 1));
        nonzero[coord] = true;
      }
      Spans s;
      for (long p = 0; p < n; ++p) {
        if (!nonzero[static_cast<size_t>(p)]) continue;
        if (!s.empty() && s.back().second == p)
          ++s.back().second;
        else
          s.emplace_back(p, p + 1);
      }
      layout[name][t.dims[di]] = std::move(s);
    }
  }
  return layout;
}

Kernel zero_skip(const Kernel& k) {
  Kernel out = k.clone();
  Layout layout = detect_zero_blocks(out);
  process_block(out, out.body, layout);
  return out;
}

}  // namespace femopt
