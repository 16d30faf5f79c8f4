#include "emit_c.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace femopt {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  // Keep integral literals obviously floating.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

struct Emitter {
  const Kernel& k;
  std::map<std::string, std::vector<std::string>> dims;  // symbol -> subscripts
  std::ostringstream out;
  int indent = 1;

  void line(const std::string& s) {
    for (int i = 0; i < indent; ++i) out << "  ";
    out << s << "\n";
  }

  std::string ref(const ExprPtr& s) const {
    auto it = dims.find(s->name);
    if (it == dims.end() || it->second.empty()) return s->name;
    const auto& d = it->second;
    std::string off;
    for (size_t i = 0; i < d.size(); ++i) {
      if (i == 0) {
        off = s->indices.at(0);
      } else {
        off = "(" + off + ") * " + std::to_string(k.extents.at(d[i])) + " + " +
              s->indices.at(i);
      }
    }
    return s->name + "[" + off + "]";
  }

  // prec: 0 additive context, 1 multiplicative, 2 unary/primary
  std::string expr(const ExprPtr& e, int prec) const {
    switch (e->kind) {
      case ExprKind::Const: {
        std::string s = num(e->value);
        return (e->value < 0 && prec >= 1) ? "(" + s + ")" : s;
      }
      case ExprKind::Sym:
        return ref(e);
      case ExprKind::Add: {
        std::string s;
        for (size_t i = 0; i < e->args.size(); ++i) {
          if (i) s += " + ";
          s += expr(e->args[i], 0);
        }
        return prec >= 1 ? "(" + s + ")" : s;
      }
      case ExprKind::Mul: {
        std::string s;
        for (size_t i = 0; i < e->args.size(); ++i) {
          if (i) s += " * ";
          s += expr(e->args[i], 1);
        }
        return prec >= 2 ? "(" + s + ")" : s;
      }
      case ExprKind::Div: {
        std::string s = expr(e->args[0], 1) + " / " + expr(e->args[1], 2);
        return prec >= 2 ? "(" + s + ")" : s;
      }
      case ExprKind::Call: {
        std::string s = e->name + "(";
        for (size_t i = 0; i < e->args.size(); ++i) {
          if (i) s += ", ";
          s += expr(e->args[i], 0);
        }
        return s + ")";
      }
    }
    throw Error(ErrorCode::Internal, "emit_c: bad expr kind");
  }

  void block(const std::vector<Item>& items) {
    for (const auto& it : items) {
      if (it.stmt) {
        line(ref(it.stmt->lhs) + (it.stmt->aug ? " += " : " = ") +
             expr(it.stmt->rhs, 0) + ";");
      } else {
        const Loop& l = *it.loop;
        line("for (int " + l.index + " = " + std::to_string(l.begin) + "; " + l.index +
             " < " + std::to_string(l.end) + "; ++" + l.index + ") {");
        ++indent;
        block(l.body);
        --indent;
        line("}");
      }
    }
  }
};

}  // namespace

std::string emit_c(const Kernel& k, const std::string& fn) {
  Emitter em{k, {}, {}, 1};

  // Symbol layout: tables first, then every assignment target.
  for (const auto& [name, t] : k.tables) em.dims[name] = t.dims;
  std::map<std::string, std::vector<std::string>> temps;  // non-output targets
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    if (!em.dims.count(s.lhs->name)) em.dims[s.lhs->name] = s.lhs->indices;
    if (!k.outputs.count(s.lhs->name) && !k.tables.count(s.lhs->name))
      temps.emplace(s.lhs->name, s.lhs->indices);
  });

  bool uses_math = false;
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    visit(s.rhs, [&](const ExprPtr& e) {
      if (e->kind == ExprKind::Call) uses_math = true;
    });
  });

  std::ostringstream hdr;
  if (uses_math) hdr << "#include <math.h>\n\n";
  hdr << "/* " << fn << ": output arrays must be zero-initialized by the caller. */\n";
  hdr << "void " << fn << "(";
  bool first = true;
  auto arg = [&](const std::string& s) {
    if (!first) hdr << ", ";
    hdr << s;
    first = false;
  };
  for (const auto& name : k.outputs) arg("double *restrict " + name);
  for (const auto& [name, t] : k.tables)
    if (t.prov == Table::Prov::Input) arg("const double *restrict " + name);
  for (const auto& [name, v] : k.constants) arg("const double " + name);
  hdr << ")\n{\n";

  // Pre-evaluated tables baked in.
  for (const auto& [name, t] : k.tables) {
    if (t.prov != Table::Prov::Preevaluated) continue;
    em.line("static const double " + name + "[" +
            std::to_string(std::max<size_t>(t.values.size(), 1)) + "] = {");
    std::string row = "  ";
    for (size_t i = 0; i < t.values.size(); ++i) {
      row += num(t.values[i]);
      if (i + 1 < t.values.size()) row += ", ";
      if (row.size() > 72 && i + 1 < t.values.size()) {
        em.line(row);
        row = "  ";
      }
    }
    em.line(row);
    em.line("};");
  }

  // Temporaries, zero-initialized (split loops may leave gaps unwritten).
  for (const auto& [name, d] : temps) {
    if (d.empty()) {
      em.line("double " + name + " = 0.0;");
    } else {
      size_t n = 1;
      for (const auto& ix : d) n *= static_cast<size_t>(k.extents.at(ix));
      em.line("double " + name + "[" + std::to_string(n) + "] = {0.0};");
    }
  }

  em.block(k.body);
  return hdr.str() + em.out.str() + "}\n";
}

}  // namespace femopt
