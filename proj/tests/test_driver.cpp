#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "driver.hpp"
#include "interp.hpp"
#include "json_io.hpp"
#include "kernels.hpp"
#include "sharing.hpp"

using namespace femopt;
using nlohmann::json;

namespace {

double worst_error(const Kernel& a, const Kernel& b) {
  auto ra = interpret(a), rb = interpret(b);
  REQUIRE(ra.size() == rb.size());
  double worst = 0.0;
  for (const auto& [name, va] : ra) {
    const auto& vb = rb.at(name);
    REQUIRE(va.size() == vb.size());
    for (size_t i = 0; i < va.size(); ++i) {
      double scale = std::max({std::abs(va[i]), std::abs(vb[i]), 1.0});
      worst = std::max(worst, std::abs(va[i] - vb[i]) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("report carries the full decision record") {
  Kernel k = corpus::load(corpus::helmholtz_json());
  DriverOptions opt;
  opt.trace = true;
  OptimizeResult r = optimize(k, opt);
  const json& rep = r.report;

  CHECK(rep.at("flops_input").get<unsigned long long>() == flop_count(k));
  CHECK(rep.at("flops_output").get<unsigned long long>() == flop_count(r.k));
  CHECK(rep.at("nest").at("orderfree") == "e");
  CHECK(rep.at("nest").at("reduction") == "i");
  CHECK(rep.at("nest").at("arity") == 2);
  REQUIRE(rep.at("monomials").is_array());
  CHECK(rep.at("monomials").size() == 3);
  for (const auto& m : rep.at("monomials")) {
    CHECK(m.contains("statement"));
    CHECK(m.contains("theta_pre"));
    CHECK(m.contains("theta_se"));
    CHECK((m.at("set") == "pre" || m.at("set") == "se"));
  }
  REQUIRE(rep.at("bipartitions").is_array());
  CHECK(!rep.at("bipartitions").empty());
  for (const auto& b : rep.at("bipartitions")) {
    CHECK(b.contains("preevaluated"));
    CHECK(b.contains("cost"));
    CHECK(b.contains("feasible"));
  }
  CHECK(rep.contains("chosen"));
  CHECK(rep.contains("predicted_flops"));
  CHECK(rep.at("memory").contains("limit"));
  CHECK(rep.at("memory").contains("preeval_table_bytes"));
  CHECK(rep.at("memory").contains("footprint_bytes"));
  CHECK(rep.contains("sharing_trace"));

  // The stage counts must be internally consistent and non-increasing.
  unsigned long long fi = rep.at("flops_input");
  unsigned long long fp = rep.at("flops_after_preeval");
  unsigned long long fs = rep.at("flops_after_sharing");
  unsigned long long fz = rep.at("flops_after_zeroskip");
  CHECK(fi >= fp);
  CHECK(fp >= fs);
  CHECK(fs >= fz);
  CHECK(fz == rep.at("flops_output").get<unsigned long long>());
}

TEST_CASE("disabling pre-evaluation reduces the pipeline to sharing elimination") {
  for (auto& [name, jk] : corpus::all_json()) {
    INFO("kernel: ", name);
    Kernel k = corpus::load(jk);
    DriverOptions opt;
    opt.enable_preeval = false;
    opt.enable_zeroskip = false;
    OptimizeResult r = optimize(k, opt);

    Kernel oracle = sharing_elimination(validate_fem_nest(k));
    dce(oracle);
    unsigned long long expect = std::min(flop_count(k), flop_count(oracle));
    CHECK(flop_count(r.k) == expect);
    CHECK(r.report.at("chosen").empty());
  }
}

TEST_CASE("memory limit: lowering it never buys more flops, and 1 byte forbids tables") {
  Kernel k = corpus::load(corpus::mass_json(2, 6, 3, 3));
  DriverOptions big, tiny;
  tiny.memory_limit = 1;
  OptimizeResult rb = optimize(k, big);
  OptimizeResult rt = optimize(k, tiny);
  CHECK(flop_count(rt.k) >= flop_count(rb.k));
  for (const auto& [n, t] : rt.k.tables) CHECK(t.prov != Table::Prov::Preevaluated);
  CHECK(rt.report.at("chosen").empty());

  // Every bipartition the search reports over the limit is marked infeasible.
  for (const auto& b : rt.report.at("bipartitions"))
    if (b.at("table_bytes").get<unsigned long long>() > 1) CHECK(!b.at("feasible"));
}

TEST_CASE("optimized kernels match the interpreter across the corpus") {
  for (auto& [name, jk] : corpus::all_json()) {
    INFO("kernel: ", name);
    Kernel k = corpus::load(jk);
    OptimizeResult r = optimize(k);
    CHECK(worst_error(k, r.k) < 1e-10);
    CHECK(flop_count(r.k) <= flop_count(k));
  }
}

TEST_CASE("verify() reports a tiny worst error and trips on corruption") {
  Kernel k = corpus::load(corpus::poisson_json(2, 3, 3, 3));
  CHECK(verify(k, DriverOptions{}, 5, 1e-10) < 1e-10);
  CHECK_THROWS_AS(verify(k, DriverOptions{}, 5, 0.0), Error);
}

TEST_CASE("more than 16 pre-evaluation candidates is an error") {
  // 17 summands, each separable and cheaper to pre-evaluate: 2^17 bipartitions
  // would be searched, so the driver refuses.
  json j = corpus::mass_json(1, 4, 3, 3);
  json sum = json::array({"+"});
  for (int m = 0; m < 17; ++m)
    sum.push_back(json::array({"*", double(m + 1), corpus::jsym("W", {"i"}),
                               corpus::jsym("B", {"i", "j"}),
                               corpus::jsym("B", {"i", "k"})}));
  j["statements"].back()["rhs"] = sum;
  // Drop the detJ preamble so every summand is table-only.
  j["statements"].erase(j["statements"].begin());
  Kernel k = corpus::load(j);
  try {
    optimize(k);
    FAIL("expected TooManyMonomials");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::TooManyMonomials);
  }
}

TEST_CASE("trace is absent unless requested") {
  Kernel k = corpus::load(corpus::fig2_json());
  OptimizeResult quiet = optimize(k);
  CHECK((!quiet.report.contains("sharing_trace") ||
         quiet.report.at("sharing_trace").is_null()));
  DriverOptions opt;
  opt.trace = true;
  OptimizeResult loud = optimize(k, opt);
  CHECK(loud.report.contains("sharing_trace"));
}
