#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "interp.hpp"
#include "kernels.hpp"
#include "rewrite.hpp"

using namespace femopt;

namespace {

double eval(const ExprPtr& e, const std::map<std::string, double>& env) {
  switch (e->kind) {
    case ExprKind::Const: return e->value;
    case ExprKind::Sym: return env.at(e->key());
    case ExprKind::Add: {
      double s = 0;
      for (const auto& a : e->args) s += eval(a, env);
      return s;
    }
    case ExprKind::Mul: {
      double p = 1;
      for (const auto& a : e->args) p *= eval(a, env);
      return p;
    }
    case ExprKind::Div: return eval(e->args[0], env) / eval(e->args[1], env);
    case ExprKind::Call: return std::sin(eval(e->args[0], env));
  }
  return 0;
}

std::map<std::string, double> random_env(const ExprPtr& e, unsigned seed) {
  std::map<std::string, double> env;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(0.25, 1.25);
  visit(e, [&](const ExprPtr& n) {
    if (n->kind == ExprKind::Sym) env.emplace(n->key(), d(rng));
  });
  return env;
}

void check_equivalent(const ExprPtr& a, const ExprPtr& b) {
  for (unsigned s = 0; s < 5; ++s) {
    auto env = random_env(a, s);
    for (const auto& [k, v] : random_env(b, s + 100)) env.emplace(k, v);
    double va = eval(a, env), vb = eval(b, env);
    CHECK(std::fabs(va - vb) <= 1e-12 * std::max({1.0, std::fabs(va), std::fabs(vb)}));
  }
}

}  // namespace

TEST_CASE("expand distributes over target sums") {
  ExprPtr a = sym("a"), b = sym("b"), v0 = sym("v0"), v1 = sym("v1");
  ExprPtr op = add({mul({a, v0}), mul({b, v1})});
  ExprPtr sq = mul({op, op});
  ExprPtr out = expand(sq, {"v0", "v1"});
  check_equivalent(sq, out);
  // Grouped by target-atom product: v0*v0, v0*v1, v1*v1.
  CHECK(summands(out).size() == 3);

  ExprPtr cxy = mul({sym("c"), add({sym("x"), sym("y")})});
  ExprPtr exp = expand(cxy, {"x"});
  check_equivalent(cxy, exp);
  CHECK(summands(exp).size() == 2);

  ExprPtr xp1 = add({sym("x"), constant(1)});
  ExprPtr sq2 = mul({xp1, xp1});
  ExprPtr out2 = expand(sq2, {"x"});
  for (double x : {-2.0, 0.0, 3.0}) {
    std::map<std::string, double> env{{sym("x")->key(), x}};
    CHECK(eval(sq2, env) == doctest::Approx(eval(out2, env)).epsilon(1e-12));
  }
}

TEST_CASE("expand refuses non-distributable positions") {
  ExprPtr e = divide(sym("c"), add({sym("x"), sym("c2")}));
  CHECK_THROWS_AS(static_cast<void>(expand(e, {"x"})), Error);
  ExprPtr e2 = call("sin", {add({sym("x"), sym("c2")})});
  CHECK_THROWS_AS(static_cast<void>(expand(e2, {"x"})), Error);
}

TEST_CASE("factorize collects shared targets") {
  ExprPtr bj = sym("b", {"j"}), ci = sym("c", {"i"}), di = sym("d", {"i"});
  ExprPtr e = add({mul({bj, ci}), mul({bj, di})});
  ExprPtr f = factorize(e, {"b"});
  check_equivalent(e, f);
  CHECK(op_count(f) == 2);  // b*(c + d)

  ExprPtr g = add({mul({sym("x"), sym("a")}), mul({sym("y"), sym("a")})});
  ExprPtr gf = factorize(g, {"a"});
  check_equivalent(g, gf);
  CHECK(op_count(gf) == 2);

  // A target appearing once is left alone.
  ExprPtr h = add({mul({sym("t0"), sym("t2")}), mul({sym("t1"), sym("t3")})});
  ExprPtr hf = factorize(h, {"t0"});
  check_equivalent(h, hf);
  CHECK(op_count(hf) == op_count(h));
}

TEST_CASE("expand then factorize is idempotent under expansion") {
  ExprPtr bj = sym("b", {"j"}), ci = sym("c", {"i"}), di = sym("d", {"i"});
  ExprPtr e = add({mul({bj, ci}), mul({bj, di})});
  ExprPtr once = reassociate(expand(e, {"b"}));
  ExprPtr again = reassociate(expand(factorize(once, {"b"}), {"b"}));
  CHECK(once->key() == again->key());
}

TEST_CASE("reassociation canonicalizes") {
  ExprPtr e = mul({mul({sym("a"), sym("b")}), sym("c")});
  ExprPtr r = reassociate(e);
  CHECK(r->kind == ExprKind::Mul);
  CHECK(r->args.size() == 3);

  ExprPtr c = reassociate(mul({constant(2), constant(3), sym("x")}));
  CHECK(c->kind == ExprKind::Mul);
  CHECK(c->args[0]->kind == ExprKind::Const);
  CHECK(c->args[0]->value == 6.0);

  ExprPtr s = reassociate(add({mul({sym("b"), sym("a")}), mul({sym("a"), sym("b")})}));
  auto terms = summands(s);
  REQUIRE(terms.size() == 2);
  CHECK(terms[0]->key() == terms[1]->key());

  // Multiplication by zero collapses.
  CHECK(reassociate(mul({constant(0), sym("x")}))->kind == ExprKind::Const);
}

TEST_CASE("code motion is safe and flop-decreasing") {
  for (const auto& [name, j] : corpus::all_json()) {
    CAPTURE(name);
    Kernel k = corpus::load(j);
    Kernel m = code_motion(k);
    CHECK(flop_count(m) <= flop_count(k));
    CHECK(max_rel_error(interpret(k), interpret(m)) < 1e-12);
    // Constraint 1: no temporary may be sized by the order-free index.
    for_each_statement(m, [&](const std::vector<const Loop*>&, const Statement& s) {
      for (const auto& ix : s.lhs->indices) CHECK(ix != "e");
    });
  }
}

TEST_CASE("code motion hoists invariant operands out of the inner loop") {
  Kernel k = corpus::load(corpus::poisson_json(1, 4, 3, 3));
  Kernel m = code_motion(k);
  CHECK(flop_count(m) < flop_count(k));
}
