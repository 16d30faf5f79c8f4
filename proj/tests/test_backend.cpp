#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <dlfcn.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "driver.hpp"
#include "emit_c.hpp"
#include "interp.hpp"
#include "json_io.hpp"
#include "kernels.hpp"
#include "zeroskip.hpp"

using namespace femopt;

namespace {

double worst_error(const std::map<std::string, std::vector<double>>& a,
                   const std::map<std::string, std::vector<double>>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (const auto& [name, va] : a) {
    const auto& vb = b.at(name);
    REQUIRE(va.size() == vb.size());
    for (size_t i = 0; i < va.size(); ++i) {
      double scale = std::max({std::abs(va[i]), std::abs(vb[i]), 1.0});
      worst = std::max(worst, std::abs(va[i] - vb[i]) / scale);
    }
  }
  return worst;
}

size_t output_size(const Kernel& k, const std::string& name) {
  auto it = k.tables.find(name);
  if (it != k.tables.end()) return it->second.values.size();
  size_t n = 1;
  for_each_statement(k, [&](const std::vector<const Loop*>&, const Statement& s) {
    if (s.lhs->name != name) return;
    size_t m = 1;
    for (const auto& ix : s.lhs->indices) m *= static_cast<size_t>(k.extents.at(ix));
    n = m;
  });
  return n;
}

// Compiles the emitted C with the system compiler, loads it, runs it on the
// kernel's tables and constants, and returns the outputs. The strongest
// possible oracle for the emitter: actual execution. A generated wrapper with
// a uniform pointer-array signature sidesteps the kernel's variadic ABI.
std::map<std::string, std::vector<double>> run_compiled(const Kernel& k,
                                                        const std::string& tag) {
  std::set<std::string> onames(k.outputs.begin(), k.outputs.end());
  std::vector<std::string> inames;
  for (const auto& [name, t] : k.tables)
    if (!onames.count(name) && t.prov != Table::Prov::Preevaluated)
      inames.push_back(name);

  std::string src = emit_c(k, "kernel");
  std::string wrap =
      "\n/* uniform entry point for the test harness */\n"
      "void kernel_argv(double* const* o, const double* const* t, const double* c) {\n"
      "  kernel(";
  size_t at = 0;
  for (size_t i = 0; i < onames.size(); ++i)
    wrap += (at++ ? ", " : "") + ("o[" + std::to_string(i) + "]");
  for (size_t i = 0; i < inames.size(); ++i)
    wrap += (at++ ? ", " : "") + ("t[" + std::to_string(i) + "]");
  for (size_t i = 0; i < k.constants.size(); ++i)
    wrap += (at++ ? ", " : "") + ("c[" + std::to_string(i) + "]");
  wrap += ");\n}\n";

  std::string base = "/tmp/femopt_emit_" + tag;
  {
    std::ofstream f(base + ".c");
    f << src << wrap;
  }
  std::string cmd = "cc -O1 -shared -fPIC -o " + base + ".so " + base + ".c -lm 2> " +
                    base + ".log";
  REQUIRE(std::system(cmd.c_str()) == 0);
  void* h = dlopen((base + ".so").c_str(), RTLD_NOW);
  REQUIRE(h != nullptr);
  auto* fn = reinterpret_cast<void (*)(double* const*, const double* const*,
                                       const double*)>(dlsym(h, "kernel_argv"));
  REQUIRE(fn != nullptr);

  std::vector<std::vector<double>> outs;
  std::vector<double*> optr;
  for (const auto& name : onames) outs.emplace_back(output_size(k, name), 0.0);
  for (auto& o : outs) optr.push_back(o.data());
  std::vector<const double*> tptr;
  for (const auto& name : inames) tptr.push_back(k.tables.at(name).values.data());
  std::vector<double> consts;
  for (const auto& [name, val] : k.constants) consts.push_back(val);

  fn(optr.data(), tptr.data(), consts.data());
  dlclose(h);

  std::map<std::string, std::vector<double>> res;
  size_t oi = 0;
  for (const auto& name : onames) res[name] = std::move(outs[oi++]);
  return res;
}

}  // namespace

TEST_CASE("detect_zero_blocks finds the padded spans") {
  Kernel k = corpus::load(corpus::padded_json(4, 8, false));
  auto blocks = detect_zero_blocks(k);
  REQUIRE(blocks.count("Bx"));
  REQUIRE(blocks.count("By"));
  // Bx is nonzero on columns [0, 4), By on [4, 8); rows are fully nonzero.
  CHECK(blocks["Bx"]["j"] == Spans{{0, 4}});
  CHECK(blocks["By"]["j"] == Spans{{4, 8}});
  CHECK(blocks["Bx"]["i"] == Spans{{0, 4}});

  // A table with interleaved zeros has multiple spans.
  nlohmann::json j = corpus::padded_json(4, 8, false);
  auto& vals = j["tables"]["Bx"]["values"];
  for (int q = 0; q < 4; ++q) vals[static_cast<size_t>(q * 8 + 1)] = 0.0;
  Kernel k2 = corpus::load(j);
  auto blocks2 = detect_zero_blocks(k2);
  CHECK(blocks2["Bx"]["j"] == Spans{{0, 1}, {2, 4}});
}

TEST_CASE("zero_skip preserves semantics and drops the padded flops") {
  for (bool with_e : {false, true}) {
    Kernel k = validate_fem_nest(corpus::load(corpus::padded_json(4, 8, with_e))).k;
    Kernel z = zero_skip(k);
    CHECK(worst_error(interpret(k), interpret(z)) == 0.0);  // exact: only zeros skipped
    unsigned long long before = flop_count(k), after = flop_count(z);
    CHECK(after < before);
    // Each monomial is active on half the j and k ranges: ~4x fewer products.
    CHECK(before - after >= (before * 2) / 5);
  }

  // Dense tables: nothing to do.
  Kernel dense = validate_fem_nest(corpus::load(corpus::mass_json())).k;
  Kernel zd = zero_skip(dense);
  CHECK(flop_count(zd) == flop_count(dense));
  CHECK(worst_error(interpret(dense), interpret(zd)) == 0.0);
}

TEST_CASE("emitted C is deterministic and free of indirection arrays") {
  Kernel k = corpus::load(corpus::padded_json(4, 8, false));
  OptimizeResult r = optimize(k);
  std::string a = emit_c(r.k, "kernel");
  std::string b = emit_c(r.k, "kernel");
  CHECK(a == b);
  // Loop-split zero skipping needs no gather/scatter maps: subscripts stay
  // plain loop-index arithmetic, so no bracket ever nests inside another and
  // no integer arrays are declared.
  int depth = 0;
  for (char ch : a) {
    if (ch == '[') {
      ++depth;
      CHECK(depth == 1);
    }
    if (ch == ']') --depth;
  }
  for (size_t p = a.find("int "); p != std::string::npos; p = a.find("int ", p + 1))
    CHECK(a.rfind("for (", p) == p - 5);  // only loop counters use int
}

TEST_CASE("emitted C compiles and matches the interpreter") {
  int idx = 0;
  for (auto& [name, jk] : corpus::all_json()) {
    INFO("kernel: ", name);
    Kernel k = corpus::load(jk);

    // Unoptimized emission.
    auto want = interpret(k);
    CHECK(worst_error(want, run_compiled(k, "raw_" + std::to_string(idx))) < 1e-12);

    // Optimized emission, including pre-evaluated static tables.
    OptimizeResult r = optimize(k);
    CHECK(worst_error(want, run_compiled(r.k, "opt_" + std::to_string(idx))) < 1e-10);
    ++idx;
  }
}
