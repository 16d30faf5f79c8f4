#include "json_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace femopt {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::Parse, msg); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& what) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) bad("unknown key '" + it.key() + "' in " + what);
}

ExprPtr parse_expr(const json& j) {
  if (j.is_number()) return constant(j.get<double>());
  if (j.is_string()) return sym(j.get<std::string>());
  if (!j.is_array() || j.empty() || !j[0].is_string())
    bad("expression must be a number, a symbol name, or [op, ...]");
  std::string op = j[0].get<std::string>();
  if (op == "sym") {
    if (j.size() < 2 || !j[1].is_string()) bad("['sym', name, indices...] expected");
    std::vector<std::string> idx;
    for (size_t i = 2; i < j.size(); ++i) {
      if (!j[i].is_string()) bad("symbol indices must be strings");
      idx.push_back(j[i].get<std::string>());
    }
    return sym(j[1].get<std::string>(), std::move(idx));
  }
  if (op == "+" || op == "*") {
    if (j.size() < 3) bad("'" + op + "' needs at least two operands");
    std::vector<ExprPtr> args;
    for (size_t i = 1; i < j.size(); ++i) args.push_back(parse_expr(j[i]));
    return op == "+" ? add(std::move(args)) : mul(std::move(args));
  }
  if (op == "/") {
    if (j.size() != 3) bad("'/' needs exactly two operands");
    return divide(parse_expr(j[1]), parse_expr(j[2]));
  }
  if (op == "call") {
    if (j.size() < 3 || !j[1].is_string()) bad("['call', fn, args...] expected");
    std::vector<ExprPtr> args;
    for (size_t i = 2; i < j.size(); ++i) args.push_back(parse_expr(j[i]));
    return call(j[1].get<std::string>(), std::move(args));
  }
  bad("unknown operator '" + op + "'");
}

ExprPtr parse_lhs(const json& j) {
  if (j.is_string()) return sym(j.get<std::string>());
  if (!j.is_array() || j.empty() || !j[0].is_string())
    bad("lhs must be a name or [name, indices...]");
  std::vector<std::string> idx;
  for (size_t i = 1; i < j.size(); ++i) {
    if (!j[i].is_string()) bad("lhs indices must be strings");
    idx.push_back(j[i].get<std::string>());
  }
  return sym(j[0].get<std::string>(), std::move(idx));
}

std::shared_ptr<Statement> parse_statement(const json& j, bool with_level) {
  std::set<std::string> allowed = {"lhs", "op", "rhs"};
  if (with_level) allowed.insert("level");
  check_keys(j, allowed, "statement");
  if (!j.contains("lhs") || !j.contains("op") || !j.contains("rhs"))
    bad("statement needs lhs, op, rhs");
  auto s = std::make_shared<Statement>();
  s->lhs = parse_lhs(j.at("lhs"));
  std::string op = j.at("op").get<std::string>();
  if (op == "+=")
    s->aug = true;
  else if (op != "=")
    bad("statement op must be '=' or '+='");
  s->rhs = parse_expr(j.at("rhs"));
  return s;
}

void parse_flat_statements(const json& arr, Kernel& k) {
  // Loops open lazily, in declaration order, as statement levels deepen; a
  // loop that has been closed cannot be reopened.
  std::vector<std::shared_ptr<Loop>> open;
  size_t next_decl = 0;
  auto make_loop = [&](size_t decl) {
    const auto& [index, cls] = k.loop_decls[decl];
    auto extent = k.extents.find(index);
    if (extent == k.extents.end()) bad("loop index '" + index + "' has no extent");
    auto l = std::make_shared<Loop>();
    l->index = index;
    l->begin = 0;
    l->end = extent->second;
    if (!cls.empty()) {
      l->declared = true;
      l->cls = cls == "orderfree"   ? LoopClass::OrderFree
               : cls == "reduction" ? LoopClass::Reduction
               : cls == "linear"    ? LoopClass::Linear
                                    : LoopClass::Plain;
      if (cls != "orderfree" && cls != "reduction" && cls != "linear" && cls != "plain")
        bad("unknown loop class '" + cls + "'");
    }
    return l;
  };
  for (const auto& js : arr) {
    if (!js.is_object() || !js.contains("level")) bad("statement needs a level");
    long level = js.at("level").get<long>();
    if (level < 0) bad("negative statement level");
    while (static_cast<long>(open.size()) > level) open.pop_back();
    while (static_cast<long>(open.size()) < level) {
      if (next_decl >= k.loop_decls.size())
        bad("statement level exceeds the number of declared loops");
      auto l = make_loop(next_decl++);
      (open.empty() ? k.body : open.back()->body).push_back(Item{nullptr, l});
      open.push_back(l);
    }
    auto s = parse_statement(js, /*with_level=*/true);
    (open.empty() ? k.body : open.back()->body).push_back(Item{s, nullptr});
  }
}

void parse_nested_body(const json& arr, Kernel& k, std::vector<Item>& block) {
  for (const auto& j : arr) {
    if (!j.is_object()) bad("body entries must be objects");
    if (j.contains("loop")) {
      check_keys(j, {"loop"}, "body entry");
      const json& jl = j.at("loop");
      check_keys(jl, {"index", "class", "begin", "end", "body"}, "loop");
      auto l = std::make_shared<Loop>();
      l->index = jl.at("index").get<std::string>();
      auto extent = k.extents.find(l->index);
      if (extent == k.extents.end()) bad("loop index '" + l->index + "' has no extent");
      l->begin = jl.value("begin", 0L);
      l->end = jl.contains("end") ? jl.at("end").get<long>() : extent->second;
      if (jl.contains("class")) {
        std::string cls = jl.at("class").get<std::string>();
        l->declared = true;
        l->cls = cls == "orderfree"   ? LoopClass::OrderFree
                 : cls == "reduction" ? LoopClass::Reduction
                 : cls == "linear"    ? LoopClass::Linear
                                      : LoopClass::Plain;
      }
      parse_nested_body(jl.at("body"), k, l->body);
      block.push_back(Item{nullptr, l});
    } else {
      block.push_back(Item{parse_statement(j, /*with_level=*/false), nullptr});
    }
  }
}

}  // namespace

Kernel kernel_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("kernel must be a JSON object");
  check_keys(j, {"indices", "loops", "tables", "constants", "outputs", "call_cost",
                 "statements", "body"},
             "kernel");
  Kernel k;
  if (!j.contains("indices") || !j.at("indices").is_object()) bad("'indices' object required");
  for (auto it = j.at("indices").begin(); it != j.at("indices").end(); ++it) {
    long v = it.value().get<long>();
    if (v < 0) bad("negative extent for index '" + it.key() + "'");
    k.extents[it.key()] = v;
  }
  if (j.contains("loops")) {
    for (const auto& jl : j.at("loops")) {
      check_keys(jl, {"index", "class"}, "loop declaration");
      if (!jl.contains("index")) bad("loop declaration needs an index");
      k.loop_decls.emplace_back(jl.at("index").get<std::string>(), jl.value("class", ""));
    }
  }
  if (j.contains("tables")) {
    for (auto it = j.at("tables").begin(); it != j.at("tables").end(); ++it) {
      check_keys(it.value(), {"dims", "values", "provenance"}, "table");
      Table t;
      size_t size = 1;
      for (const auto& d : it.value().at("dims")) {
        std::string ix = d.get<std::string>();
        auto ext = k.extents.find(ix);
        if (ext == k.extents.end()) bad("table '" + it.key() + "' dim '" + ix + "' has no extent");
        t.dims.push_back(ix);
        size *= static_cast<size_t>(ext->second);
      }
      t.values = it.value().at("values").get<std::vector<double>>();
      if (t.values.size() != size)
        bad("table '" + it.key() + "' has " + std::to_string(t.values.size()) +
            " values, expected " + std::to_string(size));
      if (it.value().value("provenance", "input") == "preevaluated")
        t.prov = Table::Prov::Preevaluated;
      k.tables[it.key()] = std::move(t);
    }
  }
  if (j.contains("constants")) {
    for (auto it = j.at("constants").begin(); it != j.at("constants").end(); ++it) {
      if (!it.value().is_number()) bad("constant '" + it.key() + "' must be a number");
      k.constants[it.key()] = it.value().get<double>();
    }
  }
  if (j.contains("outputs"))
    for (const auto& o : j.at("outputs")) k.outputs.insert(o.get<std::string>());
  if (k.outputs.empty()) bad("'outputs' must name at least one symbol");
  k.call_cost = j.value("call_cost", 1);
  if (k.call_cost < 0) bad("call_cost must be non-negative");

  if (j.contains("statements") == j.contains("body"))
    bad("exactly one of 'statements' or 'body' is required");
  if (j.contains("statements"))
    parse_flat_statements(j.at("statements"), k);
  else
    parse_nested_body(j.at("body"), k, k.body);
  return k;
}

Kernel kernel_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return kernel_from_json(ss.str());
}

namespace {

json expr_to_json(const ExprPtr& e) {
  switch (e->kind) {
    case ExprKind::Const:
      return e->value;
    case ExprKind::Sym: {
      if (e->indices.empty()) return e->name;
      json a = json::array({"sym", e->name});
      for (const auto& ix : e->indices) a.push_back(ix);
      return a;
    }
    case ExprKind::Add:
    case ExprKind::Mul:
    case ExprKind::Div: {
      json a = json::array(
          {e->kind == ExprKind::Add ? "+" : e->kind == ExprKind::Mul ? "*" : "/"});
      for (const auto& arg : e->args) a.push_back(expr_to_json(arg));
      return a;
    }
    case ExprKind::Call: {
      json a = json::array({"call", e->name});
      for (const auto& arg : e->args) a.push_back(expr_to_json(arg));
      return a;
    }
  }
  throw Error(ErrorCode::Internal, "expr_to_json: bad kind");
}

json lhs_to_json(const ExprPtr& e) {
  json a = json::array({e->name});
  for (const auto& ix : e->indices) a.push_back(ix);
  return a;
}

json body_to_json(const std::vector<Item>& block) {
  json arr = json::array();
  for (const auto& it : block) {
    if (it.stmt) {
      arr.push_back({{"lhs", lhs_to_json(it.stmt->lhs)},
                     {"op", it.stmt->aug ? "+=" : "="},
                     {"rhs", expr_to_json(it.stmt->rhs)}});
    } else {
      json jl = {{"index", it.loop->index},
                 {"class", loop_class_name(it.loop->cls)},
                 {"begin", it.loop->begin},
                 {"end", it.loop->end},
                 {"body", body_to_json(it.loop->body)}};
      arr.push_back({{"loop", jl}});
    }
  }
  return arr;
}

}  // namespace

std::string kernel_to_json(const Kernel& k) {
  json j;
  j["indices"] = json::object();
  for (const auto& [ix, n] : k.extents) j["indices"][ix] = n;
  j["tables"] = json::object();
  for (const auto& [name, t] : k.tables) {
    j["tables"][name] = {
        {"dims", t.dims},
        {"values", t.values},
        {"provenance", t.prov == Table::Prov::Preevaluated ? "preevaluated" : "input"}};
  }
  j["constants"] = json::object();
  for (const auto& [name, v] : k.constants) j["constants"][name] = v;
  j["outputs"] = std::vector<std::string>(k.outputs.begin(), k.outputs.end());
  j["call_cost"] = k.call_cost;
  j["body"] = body_to_json(k.body);
  return j.dump(2);
}

}  // namespace femopt
