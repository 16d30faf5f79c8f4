#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "interp.hpp"
#include "kernels.hpp"
#include "preeval.hpp"

using namespace femopt;

namespace {

// Number of multisets of size k drawn from n symbols, by direct enumeration.
unsigned long long count_multisets(unsigned n, unsigned k, unsigned least = 0) {
  if (k == 0) return 1;
  unsigned long long total = 0;
  for (unsigned s = least; s < n; ++s) total += count_multisets(n, k - 1, s);
  return total;
}

std::vector<size_t> all_indices(const std::vector<Monomial>& ms) {
  std::vector<size_t> out;
  for (const auto& m : ms)
    if (m.separable) out.push_back(m.index);
  return out;
}

}  // namespace

TEST_CASE("increase factor") {
  CHECK(increase_factor(3, 1) == 3);
  CHECK(increase_factor(3, 2) == 6);
  CHECK(increase_factor(5, 0) == 1);
  for (unsigned n = 1; n <= 8; ++n)
    for (unsigned k = 0; k <= 4; ++k)
      CHECK(increase_factor(n, k) == count_multisets(n, k));
}

TEST_CASE("monomial splitting") {
  Validated mass = validate_fem_nest(corpus::load(corpus::mass_json()));
  auto m1 = split_monomials(mass);
  REQUIRE(m1.size() == 1);
  CHECK(m1[0].separable);
  CHECK(m1[0].kmix == 0);
  CHECK(m1[0].iota == 1);

  Validated helm = validate_fem_nest(corpus::load(corpus::helmholtz_json()));
  CHECK(split_monomials(helm).size() == 3);

  Validated interp = validate_fem_nest(corpus::load(corpus::interp_json(1, 6, 4)));
  auto m3 = split_monomials(interp);
  REQUIRE(m3.size() == 1);
  CHECK(m3[0].separable);
  CHECK(m3[0].n == 3);
  CHECK(m3[0].kmix == 1);
  CHECK(m3[0].iota == 3);

  // A temporary between the reduction loop and the nest is not separable.
  Validated imp = validate_fem_nest(corpus::load(corpus::imperfect_json()));
  auto m4 = split_monomials(imp);
  REQUIRE(m4.size() == 1);
  CHECK_FALSE(m4[0].separable);
  CHECK_FALSE(m4[0].reject.empty());
}

TEST_CASE("pre-evaluated mass tables match a brute-force reduction") {
  Kernel in = corpus::load(corpus::mass_json());
  Validated v = validate_fem_nest(in);
  auto ms = split_monomials(v);
  PreevalResult pr = preevaluate(v, all_indices(ms));

  const Table& W = in.tables.at("W");
  const Table& B = in.tables.at("B");
  long I = in.extents.at("i"), J = in.extents.at("j"), K = in.extents.at("k");
  const Table* pre = nullptr;
  for (const auto& [name, t] : pr.k.tables)
    if (t.prov == Table::Prov::Preevaluated) {
      CHECK(pre == nullptr);
      pre = &t;
    }
  REQUIRE(pre != nullptr);
  REQUIRE(pre->dims == std::vector<std::string>{"j", "k"});
  for (long j = 0; j < J; ++j)
    for (long k = 0; k < K; ++k) {
      double want = 0;
      for (long i = 0; i < I; ++i)
        want += W.values[static_cast<size_t>(i)] *
                B.values[static_cast<size_t>(i * J + j)] *
                B.values[static_cast<size_t>(i * J + k)];
      double got = pre->values[static_cast<size_t>(j * K + k)];
      CHECK(std::fabs(got - want) <= 1e-14 * std::max(1.0, std::fabs(want)));
    }

  // The reduction loop is gone and semantics are preserved.
  CHECK(find_loop(pr.k, "i") == nullptr);
  CHECK(max_rel_error(interpret(in), interpret(pr.k)) < 1e-12);
}

TEST_CASE("choosing nothing changes nothing") {
  Kernel in = corpus::load(corpus::helmholtz_json());
  Validated v = validate_fem_nest(in);
  PreevalResult pr = preevaluate(v, {});
  CHECK(flop_count(pr.k) == flop_count(in));
  CHECK(max_rel_error(interpret(in), interpret(pr.k)) == 0.0);
  CHECK(pr.table_bytes == 0);
}

TEST_CASE("partial choice keeps the reduction loop for the residual") {
  Kernel in = corpus::load(corpus::helmholtz_json());
  Validated v = validate_fem_nest(in);
  PreevalResult pr = preevaluate(v, {0});
  CHECK(find_loop(pr.k, "i") != nullptr);
  CHECK(max_rel_error(interpret(in), interpret(pr.k)) < 1e-12);
}

TEST_CASE("value-identical tables are stored once") {
  // Both statements of twostmt reduce to the same table.
  Kernel in = corpus::load(corpus::twostmt_json());
  Validated v = validate_fem_nest(in);
  PreevalResult pr = preevaluate(v, all_indices(split_monomials(v)));
  int n = 0;
  for (const auto& [name, t] : pr.k.tables)
    if (t.prov == Table::Prov::Preevaluated) ++n;
  CHECK(n == 1);
  CHECK(max_rel_error(interpret(in), interpret(pr.k)) < 1e-12);
}

TEST_CASE("pre-evaluation is safe across the corpus") {
  for (const auto& [name, j] : corpus::all_json()) {
    CAPTURE(name);
    Kernel in = corpus::load(j);
    Validated v = validate_fem_nest(in);
    if (v.reduction.empty()) continue;
    auto chosen = all_indices(split_monomials(v));
    if (chosen.empty()) continue;
    PreevalResult pr = preevaluate(v, chosen);
    CHECK(max_rel_error(interpret(in), interpret(pr.k)) < 1e-10);
    // No pre-evaluated table is dimensioned by the element or reduction index.
    for (const auto& [tname, t] : pr.k.tables)
      if (t.prov == Table::Prov::Preevaluated)
        for (const auto& d : t.dims) {
          CHECK(d != v.orderfree);
          CHECK(d != v.reduction);
        }
  }
}

TEST_CASE("expansion growth: interpolated coefficient yields rho*iota terms") {
  Validated v = validate_fem_nest(corpus::load(corpus::interp_json(1, 6, 4)));
  auto ms = split_monomials(v);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].groups.size() == 3);  // rho = 1, iota = 3

  Validated v2 = validate_fem_nest(corpus::load(corpus::interp2mix_json()));
  auto ms2 = split_monomials(v2);
  REQUIRE(ms2.size() == 1);
  CHECK(ms2[0].n == 2);
  CHECK(ms2[0].kmix == 2);
  CHECK(ms2[0].iota == 3);  // C(2+2-1, 2)
  // Four gamma-distinct expansion terms (f0f2, f0f0, f1f2, f0f1), but the two
  // cross terms share the tau product B0*B1, so deduplication leaves exactly
  // iota = 3 distinct pre-evaluated tables.
  CHECK(ms2[0].groups.size() == 4);
  std::vector<size_t> all2(ms2.size());
  for (size_t i = 0; i < all2.size(); ++i) all2[i] = i;
  PreevalResult pr2 = preevaluate(v2, all2);
  size_t ntab = 0;
  for (const auto& [tname, t] : pr2.k.tables)
    if (t.prov == Table::Prov::Preevaluated) ++ntab;
  CHECK(ntab == 3);
}
