#include "driver.hpp"

#include <algorithm>

#include "cost.hpp"
#include "interp.hpp"
#include "sharing.hpp"
#include "zeroskip.hpp"

namespace femopt {

using nlohmann::json;

namespace {

// Cost of one bipartition, computed as a fused dry run so work shared between
// the residual and pre-evaluated parts (element-level preheaders) is not
// double-counted: structurally pre-evaluate the chosen set, then dry-run
// sharing elimination over the rest.
unsigned long long plan_cost(const Validated& v, const std::vector<size_t>& chosen) {
  PreevalResult pr = preevaluate(v, chosen, /*structural=*/true);
  dce(pr.k);
  bool has_loop = false;
  for (const auto& it : pr.k.body)
    if (it.loop) has_loop = true;
  if (!has_loop) return flop_count(pr.k);
  Validated v2 = validate_fem_nest(pr.k);
  Kernel out = sharing_elimination(v2);
  dce(out);
  return flop_count(out);
}

}  // namespace

OptimizeResult optimize(const Kernel& input, const DriverOptions& opt) {
  OptimizeResult res;
  json& rep = res.report;
  Validated v = validate_fem_nest(input);
  unsigned long long flops_in = flop_count(v.k);
  rep["flops_input"] = flops_in;
  rep["nest"] = {{"orderfree", v.orderfree},
                 {"reduction", v.reduction},
                 {"linear", v.linear},
                 {"arity", v.arity}};

  // Triage.
  auto monos = split_monomials(v);
  std::vector<size_t> pre_candidates;
  json jmono = json::array();
  for (const auto& m : monos) {
    ThetaPre tp = theta_pre(v, {m.index});
    unsigned long long tse = theta_se(v, {m.index});
    bool to_pre = opt.enable_preeval && !tp.rejected && tp.flops < tse;
    if (to_pre) pre_candidates.push_back(m.index);
    json jm;
    jm["index"] = m.index;
    jm["statement"] = m.stmt_lhs;
    jm["expr"] = m.expr->key();
    jm["separable"] = m.separable;
    if (!m.separable || tp.rejected) jm["rejected"] = tp.rejected ? tp.reason : m.reject;
    jm["n"] = m.n;
    jm["k"] = m.kmix;
    jm["iota"] = m.iota;
    jm["theta_pre"] = tp.rejected ? json() : json(tp.flops);
    jm["theta_se"] = tse;
    jm["set"] = to_pre ? "pre" : "se";
    jmono.push_back(std::move(jm));
  }
  rep["monomials"] = std::move(jmono);
  if (pre_candidates.size() > 16)
    throw Error(ErrorCode::TooManyMonomials,
                "bipartition search over " + std::to_string(pre_candidates.size()) +
                    " pre-evaluable monomials exceeds the supported 16");

  // Exhaustive bipartition search over the pre-evaluable set.
  json jparts = json::array();
  unsigned long long best_cost = ~0ull;
  std::vector<size_t> best_chosen;
  bool have_best = false;
  for (unsigned long mask = 0; mask < (1ul << pre_candidates.size()); ++mask) {
    std::vector<size_t> chosen;
    for (size_t b = 0; b < pre_candidates.size(); ++b)
      if ((mask >> b) & 1) chosen.push_back(pre_candidates[b]);
    ThetaPre tp = theta_pre(v, chosen);
    unsigned long long cost = plan_cost(v, chosen);
    bool feasible = !tp.rejected && tp.table_bytes <= opt.memory_limit;
    json jb;
    jb["preevaluated"] = chosen;
    jb["cost"] = cost;
    jb["table_bytes"] = tp.table_bytes;
    jb["feasible"] = feasible;
    jparts.push_back(std::move(jb));
    if (!feasible) continue;
    bool better = !have_best || cost < best_cost ||
                  (cost == best_cost && chosen.size() < best_chosen.size()) ||
                  (cost == best_cost && chosen.size() == best_chosen.size() &&
                   chosen < best_chosen);
    if (better) {
      have_best = true;
      best_cost = cost;
      best_chosen = std::move(chosen);
    }
  }
  rep["bipartitions"] = std::move(jparts);
  rep["chosen"] = best_chosen;
  rep["predicted_flops"] = best_cost;

  // Apply the plan: numeric pre-evaluation, then sharing elimination.
  PreevalResult pr = preevaluate(v, best_chosen, /*structural=*/false);
  unsigned long long flops_pre = flop_count(pr.k);
  json trace = json::array();
  Kernel k2;
  {
    bool has_loop = false;
    for (const auto& it : pr.k.body)
      if (it.loop) has_loop = true;
    if (has_loop) {
      Validated v2 = validate_fem_nest(pr.k);
      k2 = sharing_elimination(v2, opt.trace ? &trace : nullptr);
    } else {
      k2 = pr.k.clone();
    }
  }
  dce(k2);
  unsigned long long flops_se = flop_count(k2);

  Kernel k3 = opt.enable_zeroskip ? zero_skip(k2) : k2.clone();
  unsigned long long flops_zs = flop_count(k3);

  rep["flops_after_preeval"] = flops_pre;
  rep["flops_after_sharing"] = flops_se;
  rep["flops_after_zeroskip"] = flops_zs;
  rep["flops_output"] = flops_zs;
  rep["memory"] = {{"limit", opt.memory_limit},
                   {"preeval_table_bytes", pr.table_bytes},
                   {"footprint_bytes", memory_footprint(k3)}};
  if (opt.trace) rep["sharing_trace"] = std::move(trace);

  if (flops_zs > flops_in)
    throw Error(ErrorCode::Internal, "pipeline raised the operation count");
  res.k = std::move(k3);
  return res;
}

double verify(const Kernel& input, const DriverOptions& opt, int seeds, double tol) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Kernel r = randomized(input, 0x9e3779b97f4a7c15ull + static_cast<unsigned long long>(s));
    auto expect = interpret(r);
    OptimizeResult o = optimize(r, opt);
    auto got = interpret(o.k);
    worst = std::max(worst, max_rel_error(expect, got));
    if (worst > tol)
      throw Error(ErrorCode::Internal,
                  "verification failed at seed " + std::to_string(s) +
                      ": relative error " + std::to_string(worst));
  }
  return worst;
}

}  // namespace femopt
