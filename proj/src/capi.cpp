#include "femopt.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "driver.hpp"
#include "emit_c.hpp"
#include "json_io.hpp"

namespace {

thread_local std::string g_last_error;

int code_of(const femopt::Error& e) {
  using femopt::ErrorCode;
  switch (e.code) {
    case ErrorCode::Parse: return FEMOPT_ERR_PARSE;
    case ErrorCode::UnknownLoop: return FEMOPT_ERR_UNKNOWN_LOOP;
    case ErrorCode::NotFemNest: return FEMOPT_ERR_NOT_FEM_NEST;
    case ErrorCode::NonDistributable: return FEMOPT_ERR_NON_DISTRIBUTABLE;
    case ErrorCode::NonSeparable: return FEMOPT_ERR_NON_SEPARABLE;
    case ErrorCode::NotNormalForm: return FEMOPT_ERR_NOT_NORMAL_FORM;
    case ErrorCode::TooManyMonomials: return FEMOPT_ERR_TOO_MANY_MONOMIALS;
    case ErrorCode::InconsistentLayout: return FEMOPT_ERR_INCONSISTENT_LAYOUT;
    case ErrorCode::InvalidArg: return FEMOPT_ERR_INVALID_ARG;
    case ErrorCode::Io: return FEMOPT_ERR_IO;
    case ErrorCode::Internal: return FEMOPT_ERR_INTERNAL;
  }
  return FEMOPT_ERR_INTERNAL;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FEMOPT_OK;
  } catch (const femopt::Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FEMOPT_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

femopt::DriverOptions to_driver(const femopt_options* opt) {
  femopt::DriverOptions d;
  if (opt) {
    d.memory_limit = opt->memory_limit;
    d.enable_preeval = opt->enable_preeval != 0;
    d.enable_zeroskip = opt->enable_zero_skip != 0;
    d.trace = opt->trace != 0;
  }
  return d;
}

}  // namespace

struct femopt_kernel {
  femopt::Kernel k;
};

extern "C" {

void femopt_options_init(femopt_options* opt) {
  if (!opt) return;
  femopt::DriverOptions d;
  opt->memory_limit = static_cast<size_t>(d.memory_limit);
  opt->enable_preeval = d.enable_preeval ? 1 : 0;
  opt->enable_zero_skip = d.enable_zeroskip ? 1 : 0;
  opt->trace = d.trace ? 1 : 0;
}

int femopt_kernel_parse(const char* json_text, femopt_kernel** out) {
  if (!json_text || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] { *out = new femopt_kernel{femopt::kernel_from_json(json_text)}; });
}

int femopt_kernel_read(const char* path, femopt_kernel** out) {
  if (!path || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] { *out = new femopt_kernel{femopt::kernel_from_file(path)}; });
}

void femopt_kernel_free(femopt_kernel* k) { delete k; }

int femopt_kernel_flops(const femopt_kernel* k, unsigned long long* out) {
  if (!k || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] { *out = femopt::flop_count(k->k); });
}

int femopt_optimize(const femopt_kernel* k, const femopt_options* opt,
                    femopt_kernel** out, char** report_json) {
  if (!k || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] {
    femopt::OptimizeResult r = femopt::optimize(k->k, to_driver(opt));
    if (report_json) *report_json = dup_string(r.report.dump(2));
    *out = new femopt_kernel{std::move(r.k)};
  });
}

int femopt_kernel_to_json(const femopt_kernel* k, char** out) {
  if (!k || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] { *out = dup_string(femopt::kernel_to_json(k->k)); });
}

int femopt_emit_c(const femopt_kernel* k, const char* fn_name, char** out) {
  if (!k || !out) {
    g_last_error = "null argument";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] {
    *out = dup_string(femopt::emit_c(k->k, fn_name && *fn_name ? fn_name : "kernel"));
  });
}

int femopt_verify(const femopt_kernel* k, const femopt_options* opt, int rounds,
                  double tolerance, double* max_rel_error) {
  if (!k || rounds <= 0) {
    g_last_error = "null kernel or non-positive round count";
    return FEMOPT_ERR_INVALID_ARG;
  }
  return guarded([&] {
    double worst = femopt::verify(k->k, to_driver(opt), rounds, tolerance);
    if (max_rel_error) *max_rel_error = worst;
  });
}

const char* femopt_last_error(void) { return g_last_error.c_str(); }

void femopt_string_free(char* s) { std::free(s); }

}  // extern "C"
