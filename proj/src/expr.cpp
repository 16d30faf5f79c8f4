#include "expr.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

namespace femopt {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::set<std::string> union_deps(const std::vector<ExprPtr>& args) {
  std::set<std::string> out;
  for (const auto& a : args) out.insert(a->dep.begin(), a->dep.end());
  return out;
}

ExprPtr make(ExprKind kind, double value, std::string name,
             std::vector<std::string> indices, std::vector<ExprPtr> args) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->value = value;
  e->name = std::move(name);
  e->indices = std::move(indices);
  e->args = std::move(args);
  if (kind == ExprKind::Sym)
    e->dep = std::set<std::string>(e->indices.begin(), e->indices.end());
  else
    e->dep = union_deps(e->args);
  return e;
}

}  // namespace

const std::string& Expr::key() const {
  if (!key_.empty()) return key_;
  switch (kind) {
    case ExprKind::Const:
      key_ = fmt_double(value);
      break;
    case ExprKind::Sym: {
      key_ = name;
      if (!indices.empty()) {
        key_ += '[';
        for (size_t i = 0; i < indices.size(); ++i) {
          if (i) key_ += ',';
          key_ += indices[i];
        }
        key_ += ']';
      }
      break;
    }
    case ExprKind::Add:
    case ExprKind::Mul:
    case ExprKind::Div:
    case ExprKind::Call: {
      key_ = '(';
      if (kind == ExprKind::Add)
        key_ += '+';
      else if (kind == ExprKind::Mul)
        key_ += '*';
      else if (kind == ExprKind::Div)
        key_ += '/';
      else
        key_ += name;
      for (const auto& a : args) {
        key_ += ' ';
        key_ += a->key();
      }
      key_ += ')';
      break;
    }
  }
  return key_;
}

ExprPtr constant(double v) { return make(ExprKind::Const, v, "", {}, {}); }

ExprPtr sym(std::string name, std::vector<std::string> indices) {
  return make(ExprKind::Sym, 0.0, std::move(name), std::move(indices), {});
}

ExprPtr add(std::vector<ExprPtr> terms) {
  if (terms.empty()) return constant(0.0);
  if (terms.size() == 1) return terms[0];
  return make(ExprKind::Add, 0.0, "", {}, std::move(terms));
}

ExprPtr mul(std::vector<ExprPtr> factors) {
  if (factors.empty()) return constant(1.0);
  if (factors.size() == 1) return factors[0];
  return make(ExprKind::Mul, 0.0, "", {}, std::move(factors));
}

ExprPtr divide(ExprPtr num, ExprPtr den) {
  return make(ExprKind::Div, 0.0, "", {}, {std::move(num), std::move(den)});
}

ExprPtr call(std::string fn, std::vector<ExprPtr> args) {
  return make(ExprKind::Call, 0.0, std::move(fn), {}, std::move(args));
}

bool is_atom(const ExprPtr& e) {
  return e->kind == ExprKind::Const || e->kind == ExprKind::Sym;
}

std::vector<ExprPtr> summands(const ExprPtr& e) {
  if (e->kind == ExprKind::Add) return e->args;
  return {e};
}

std::vector<ExprPtr> factors(const ExprPtr& e) {
  if (e->kind == ExprKind::Mul) return e->args;
  return {e};
}

ExprPtr reassociate(const ExprPtr& e) {
  switch (e->kind) {
    case ExprKind::Const:
    case ExprKind::Sym:
      return e;
    case ExprKind::Div: {
      ExprPtr num = reassociate(e->args[0]);
      ExprPtr den = reassociate(e->args[1]);
      if (num->kind == ExprKind::Const && num->value == 0.0) return num;
      return divide(num, den);
    }
    case ExprKind::Call: {
      std::vector<ExprPtr> args;
      args.reserve(e->args.size());
      for (const auto& a : e->args) args.push_back(reassociate(a));
      return call(e->name, std::move(args));
    }
    case ExprKind::Add: {
      std::vector<ExprPtr> flat;
      double c = 0.0;
      bool has_const = false;
      for (const auto& raw : e->args) {
        ExprPtr a = reassociate(raw);
        for (const auto& t : summands(a)) {
          if (t->kind == ExprKind::Const) {
            c += t->value;
            has_const = true;
          } else {
            flat.push_back(t);
          }
        }
      }
      if (has_const && (c != 0.0 || flat.empty())) flat.push_back(constant(c));
      std::stable_sort(flat.begin(), flat.end(),
                       [](const ExprPtr& a, const ExprPtr& b) { return a->key() < b->key(); });
      return add(std::move(flat));
    }
    case ExprKind::Mul: {
      std::vector<ExprPtr> flat;
      double c = 1.0;
      bool has_const = false;
      for (const auto& raw : e->args) {
        ExprPtr a = reassociate(raw);
        for (const auto& f : factors(a)) {
          if (f->kind == ExprKind::Const) {
            c *= f->value;
            has_const = true;
          } else {
            flat.push_back(f);
          }
        }
      }
      if (has_const && c == 0.0) return constant(0.0);
      if (has_const && (c != 1.0 || flat.empty())) flat.push_back(constant(c));
      std::stable_sort(flat.begin(), flat.end(),
                       [](const ExprPtr& a, const ExprPtr& b) { return a->key() < b->key(); });
      return mul(std::move(flat));
    }
  }
  throw Error(ErrorCode::Internal, "reassociate: bad expr kind");
}

long op_count(const ExprPtr& e, int call_cost) {
  switch (e->kind) {
    case ExprKind::Const:
    case ExprKind::Sym:
      return 0;
    case ExprKind::Div:
      return 1 + op_count(e->args[0], call_cost) + op_count(e->args[1], call_cost);
    case ExprKind::Call: {
      long n = call_cost;
      for (const auto& a : e->args) n += op_count(a, call_cost);
      return n;
    }
    case ExprKind::Add:
    case ExprKind::Mul: {
      long n = static_cast<long>(e->args.size()) - 1;
      for (const auto& a : e->args) n += op_count(a, call_cost);
      return n;
    }
  }
  throw Error(ErrorCode::Internal, "op_count: bad expr kind");
}

namespace {

bool contains_key(const ExprPtr& e, const std::string& k) {
  if (e->key() == k) return true;
  for (const auto& a : e->args)
    if (contains_key(a, k)) return true;
  return false;
}

}  // namespace

int sym_degree(const ExprPtr& e, const std::string& sym_key) {
  if (e->key() == sym_key) return 1;
  switch (e->kind) {
    case ExprKind::Const:
    case ExprKind::Sym:
      return 0;
    case ExprKind::Div: {
      if (contains_key(e->args[1], sym_key)) return kNonAffine;
      return sym_degree(e->args[0], sym_key);
    }
    case ExprKind::Call: {
      for (const auto& a : e->args)
        if (contains_key(a, sym_key)) return kNonAffine;
      return 0;
    }
    case ExprKind::Add: {
      int d = 0;
      for (const auto& a : e->args) d = std::max(d, sym_degree(a, sym_key));
      return d;
    }
    case ExprKind::Mul: {
      long d = 0;
      for (const auto& a : e->args) d += sym_degree(a, sym_key);
      return static_cast<int>(std::min<long>(d, kNonAffine));
    }
  }
  throw Error(ErrorCode::Internal, "sym_degree: bad expr kind");
}

ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& by_key) {
  auto it = by_key.find(e->key());
  if (it != by_key.end()) return it->second;
  if (e->args.empty()) return e;
  bool changed = false;
  std::vector<ExprPtr> args;
  args.reserve(e->args.size());
  for (const auto& a : e->args) {
    ExprPtr r = substitute(a, by_key);
    if (r != a) changed = true;
    args.push_back(std::move(r));
  }
  if (!changed) return e;
  switch (e->kind) {
    case ExprKind::Add:
      return add(std::move(args));
    case ExprKind::Mul:
      return mul(std::move(args));
    case ExprKind::Div:
      return divide(args[0], args[1]);
    case ExprKind::Call:
      return call(e->name, std::move(args));
    default:
      throw Error(ErrorCode::Internal, "substitute: bad expr kind");
  }
}

void visit(const ExprPtr& e, const std::function<void(const ExprPtr&)>& fn) {
  for (const auto& a : e->args) visit(a, fn);
  fn(e);
}

}  // namespace femopt
