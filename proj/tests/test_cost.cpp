#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cost.hpp"
#include "interp.hpp"
#include "json_io.hpp"
#include "kernels.hpp"
#include "preeval.hpp"
#include "rewrite.hpp"
#include "sharing.hpp"

using namespace femopt;

namespace {

std::vector<size_t> all_of(const Validated& v) {
  std::vector<size_t> out(split_monomials(v).size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace

TEST_CASE("strip_to_monomials keeps exactly the chosen summands") {
  Validated v = validate_fem_nest(corpus::load(corpus::helmholtz_json()));
  auto ms = split_monomials(v);
  REQUIRE(ms.size() == 3);

  // Stripping to everything preserves semantics (the rhs is normalized to a
  // sum of monomials, so operation counts may differ from the factored input).
  Kernel full = strip_to_monomials(v, all_of(v));
  {
    auto a = interpret(v.k), b = interpret(full);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, va] : a)
      for (size_t i = 0; i < va.size(); ++i)
        CHECK(va[i] == doctest::Approx(b.at(name)[i]).epsilon(1e-12));
  }

  // Stripping to one monomial leaves a single summand in the inner statement
  // and costs strictly less.
  Kernel one = strip_to_monomials(v, {0});
  CHECK(flop_count(one) < flop_count(v.k));
  int inner_stmts = 0;
  for_each_statement(one, [&](const std::vector<const Loop*>& chain, const Statement& s) {
    if (!chain.empty() && chain.back()->cls == LoopClass::Linear &&
        s.aug) {
      ++inner_stmts;
      CHECK(s.rhs->kind != ExprKind::Add);
    }
  });
  CHECK(inner_stmts >= 1);
}

TEST_CASE("theta_se: empty set costs nothing, full set matches a real dry run") {
  Validated v = validate_fem_nest(corpus::load(corpus::poisson_json(1, 3, 3, 3)));
  CHECK(theta_se(v, {}) == 0);

  // Oracle: apply the same transformation for real and count.
  Kernel shared =
      sharing_elimination(validate_fem_nest(strip_to_monomials(v, all_of(v))));
  dce(shared);
  CHECK(theta_se(v, all_of(v)) == flop_count(shared));
}

TEST_CASE("theta_pre matches the flops of the actual transformation") {
  for (auto jk : {corpus::mass_json(), corpus::interp_json(1, 6, 4),
                  corpus::twostmt_json()}) {
    Validated v = validate_fem_nest(corpus::load(jk));
    auto chosen = all_of(v);
    ThetaPre tp = theta_pre(v, chosen);
    REQUIRE(!tp.rejected);

    // Oracle: structurally pre-evaluate a stripped clone, clean it up, then
    // run sharing elimination — the driver's fused dry run, done by hand.
    Validated sv = validate_fem_nest(strip_to_monomials(v, chosen));
    PreevalResult pr = preevaluate(sv, all_of(sv), /*structural=*/true);
    Kernel cleaned = pr.k.clone();
    dce(cleaned);
    Kernel shared = sharing_elimination(validate_fem_nest(cleaned));
    dce(shared);
    CHECK(tp.flops == flop_count(shared));
  }
}

TEST_CASE("theta_pre rejection: growth factor at or past the reduction extent") {
  // interp has n = 3, kmix = 1, iota = 3. With I = 6 > 3 pre-evaluation is
  // allowed; with I = 2 <= 3 it must be rejected.
  Validated big = validate_fem_nest(corpus::load(corpus::interp_json(1, 6, 4)));
  CHECK(!theta_pre(big, all_of(big)).rejected);

  Validated small = validate_fem_nest(corpus::load(corpus::interp_json(1, 2, 4)));
  ThetaPre tp = theta_pre(small, all_of(small));
  CHECK(tp.rejected);
  CHECK(!tp.reason.empty());
}

TEST_CASE("theta_pre rejection: non-separable monomials") {
  Validated v = validate_fem_nest(corpus::load(corpus::imperfect_json()));
  auto ms = split_monomials(v);
  bool any_nonsep = false;
  for (const auto& m : ms) any_nonsep |= !m.separable;
  REQUIRE(any_nonsep);
  CHECK(theta_pre(v, all_of(v)).rejected);
}

TEST_CASE("theta_pre table bytes bound the real (deduplicated) storage") {
  Validated v = validate_fem_nest(corpus::load(corpus::twostmt_json()));
  auto chosen = all_of(v);
  ThetaPre tp = theta_pre(v, chosen);
  REQUIRE(!tp.rejected);
  PreevalResult pr = preevaluate(v, chosen);  // numeric, deduplicated
  CHECK(tp.table_bytes >= pr.table_bytes);
  CHECK(pr.table_bytes > 0);
}

TEST_CASE("memory_footprint counts temporaries and pre-evaluated tables") {
  // mass_json pre-evaluated: one [j, k] table with J = K = 3 -> 9 doubles.
  Validated v = validate_fem_nest(corpus::load(corpus::mass_json()));
  PreevalResult pr = preevaluate(v, all_of(v));
  unsigned long long table_bytes = 0;
  for (const auto& [n, t] : pr.k.tables)
    if (t.prov == Table::Prov::Preevaluated)
      table_bytes += t.values.size() * sizeof(double);
  CHECK(table_bytes == 9 * sizeof(double));
  CHECK(memory_footprint(pr.k) >= table_bytes);

  // Input tables do not count; mass holds only the scalar temporary `det`.
  Kernel plain = corpus::load(corpus::mass_json());
  CHECK(memory_footprint(plain) == sizeof(double));

  // A [j][k] temporary introduced by hand counts as J*K doubles.
  {
    nlohmann::json j = corpus::mass_json(2, 4, 6, 6);
    nlohmann::json stmts = j["statements"];
    nlohmann::json tmp = {{"level", 3},
                          {"lhs", nlohmann::json::array({"t", "j", "k"})},
                          {"op", "="},
                          {"rhs", nlohmann::json::array(
                                      {"*", corpus::jsym("B", {"i", "j"}), "det"})}};
    nlohmann::json aug = stmts.back();
    aug["rhs"] = nlohmann::json::array(
        {"*", corpus::jsym("t", {"j", "k"}), corpus::jsym("W", {"i"})});
    j["statements"] = nlohmann::json::array({stmts[0], tmp, aug});
    Kernel k = corpus::load(j);
    CHECK(memory_footprint(k) == 37 * sizeof(double));  // t[6][6] plus det
  }
}

TEST_CASE("memory_footprint rejects element-indexed temporaries") {
  nlohmann::json j = corpus::mass_json();
  nlohmann::json stmts = j["statements"];
  nlohmann::json bad = {{"level", 1},
                        {"lhs", nlohmann::json::array({"t", "e"})},
                        {"op", "="},
                        {"rhs", nlohmann::json::array({"*", "c0", "c1"})}};
  j["statements"] = nlohmann::json::array({stmts[0], bad, stmts[1]});
  Kernel k = corpus::load(j);
  CHECK_THROWS_AS(memory_footprint(k), Error);
}
