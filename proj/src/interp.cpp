#include "interp.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace femopt {

namespace {

struct ArrayVal {
  std::vector<std::string> dims;
  std::vector<double> data;
};

struct Env {
  const Kernel* k = nullptr;
  std::map<std::string, ArrayVal> arrays;
  std::map<std::string, double> scalars;
  std::map<std::string, long> idx;

  size_t offset(const ArrayVal& a, const std::vector<std::string>& subs) const {
    if (subs.size() != a.dims.size())
      throw Error(ErrorCode::Internal, "subscript rank mismatch");
    size_t off = 0;
    for (size_t d = 0; d < a.dims.size(); ++d) {
      auto it = idx.find(subs[d]);
      if (it == idx.end()) throw Error(ErrorCode::Internal, "unbound index '" + subs[d] + "'");
      off = off * static_cast<size_t>(k->extents.at(a.dims[d])) +
            static_cast<size_t>(it->second);
    }
    return off;
  }
};

double eval(const ExprPtr& e, Env& env);

double eval_call(const std::string& fn, const std::vector<double>& a) {
  if (fn == "sin") return std::sin(a.at(0));
  if (fn == "cos") return std::cos(a.at(0));
  if (fn == "tan") return std::tan(a.at(0));
  if (fn == "exp") return std::exp(a.at(0));
  if (fn == "log") return std::log(a.at(0));
  if (fn == "sqrt") return std::sqrt(a.at(0));
  if (fn == "fabs" || fn == "abs") return std::fabs(a.at(0));
  if (fn == "pow") return std::pow(a.at(0), a.at(1));
  throw Error(ErrorCode::InvalidArg, "unknown function '" + fn + "'");
}

double eval(const ExprPtr& e, Env& env) {
  switch (e->kind) {
    case ExprKind::Const:
      return e->value;
    case ExprKind::Sym: {
      if (e->indices.empty()) {
        auto s = env.scalars.find(e->name);
        if (s != env.scalars.end()) return s->second;
        auto a = env.arrays.find(e->name);
        if (a != env.arrays.end() && a->second.dims.empty()) return a->second.data.at(0);
        throw Error(ErrorCode::Internal, "read of undefined symbol '" + e->name + "'");
      }
      auto a = env.arrays.find(e->name);
      if (a == env.arrays.end())
        throw Error(ErrorCode::Internal, "read of undefined array '" + e->name + "'");
      return a->second.data.at(env.offset(a->second, e->indices));
    }
    case ExprKind::Add: {
      double v = 0.0;
      for (const auto& t : e->args) v += eval(t, env);
      return v;
    }
    case ExprKind::Mul: {
      double v = 1.0;
      for (const auto& f : e->args) v *= eval(f, env);
      return v;
    }
    case ExprKind::Div:
      return eval(e->args[0], env) / eval(e->args[1], env);
    case ExprKind::Call: {
      std::vector<double> args;
      args.reserve(e->args.size());
      for (const auto& a : e->args) args.push_back(eval(a, env));
      return eval_call(e->name, args);
    }
  }
  throw Error(ErrorCode::Internal, "eval: bad expr kind");
}

void store(const Statement& s, Env& env) {
  double v = eval(s.rhs, env);
  if (s.lhs->indices.empty()) {
    double& slot = env.scalars[s.lhs->name];
    slot = s.aug ? slot + v : v;
    return;
  }
  auto it = env.arrays.find(s.lhs->name);
  if (it == env.arrays.end()) {
    ArrayVal a;
    a.dims = s.lhs->indices;
    size_t size = 1;
    for (const auto& d : a.dims) size *= static_cast<size_t>(env.k->extents.at(d));
    a.data.assign(size, 0.0);
    it = env.arrays.emplace(s.lhs->name, std::move(a)).first;
  }
  double& slot = it->second.data.at(env.offset(it->second, s.lhs->indices));
  slot = s.aug ? slot + v : v;
}

void run_block(const std::vector<Item>& block, Env& env) {
  for (const auto& it : block) {
    if (it.stmt) {
      store(*it.stmt, env);
    } else {
      for (long v = it.loop->begin; v < it.loop->end; ++v) {
        env.idx[it.loop->index] = v;
        run_block(it.loop->body, env);
      }
      env.idx.erase(it.loop->index);
    }
  }
}

}  // namespace

std::map<std::string, std::vector<double>> interpret(const Kernel& k) {
  Env env;
  env.k = &k;
  for (const auto& [name, t] : k.tables) env.arrays[name] = ArrayVal{t.dims, t.values};
  for (const auto& [name, v] : k.constants) env.scalars[name] = v;
  // Outputs are zero on entry; make sure they exist even if never written.
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    if (!k.outputs.count(s.lhs->name) || s.lhs->indices.empty()) return;
    if (env.arrays.count(s.lhs->name)) return;
    ArrayVal a;
    a.dims = s.lhs->indices;
    size_t size = 1;
    for (const auto& d : a.dims) size *= static_cast<size_t>(k.extents.at(d));
    a.data.assign(size, 0.0);
    env.arrays[s.lhs->name] = std::move(a);
  });
  run_block(k.body, env);

  std::map<std::string, std::vector<double>> out;
  for (const auto& name : k.outputs) {
    auto a = env.arrays.find(name);
    if (a != env.arrays.end()) {
      out[name] = a->second.data;
    } else {
      auto s = env.scalars.find(name);
      out[name] = {s != env.scalars.end() ? s->second : 0.0};
    }
  }
  return out;
}

Kernel randomized(const Kernel& k, unsigned long long seed) {
  Kernel out = k.clone();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.25, 1.25);
  for (auto it = out.tables.begin(); it != out.tables.end();) {
    if (it->second.prov == Table::Prov::Preevaluated) {
      it = out.tables.erase(it);
      continue;
    }
    // Exact zeros encode the basis layout (zero-padded blocks), not data;
    // keep them so zero-block reasoning stays observable under verification.
    for (double& v : it->second.values)
      if (v != 0.0) v = dist(rng);
    ++it;
  }
  for (auto& [name, v] : out.constants) v = dist(rng);
  return out;
}

double max_rel_error(const std::map<std::string, std::vector<double>>& a,
                     const std::map<std::string, std::vector<double>>& b) {
  double worst = 0.0;
  auto scan = [&](const std::map<std::string, std::vector<double>>& x,
                  const std::map<std::string, std::vector<double>>& y) {
    for (const auto& [name, xv] : x) {
      auto it = y.find(name);
      if (it == y.end() || it->second.size() != xv.size()) return false;
      for (size_t i = 0; i < xv.size(); ++i) {
        double d = std::fabs(xv[i] - it->second[i]);
        double scale = std::max({1.0, std::fabs(xv[i]), std::fabs(it->second[i])});
        worst = std::max(worst, d / scale);
      }
    }
    return true;
  };
  if (!scan(a, b)) return std::numeric_limits<double>::infinity();
  return worst;
}

}  // namespace femopt
