#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "femopt.h"

namespace {

int fail(int rc) {
  std::cerr << "error: " << femopt_last_error() << " (code " << rc << ")\n";
  return 1;
}

bool write_file(const std::string& path, const char* text) {
  std::ofstream out(path);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"femopt: operation-count optimizer for assembly kernels"};
  app.require_subcommand(1);

  std::string input;
  std::string output;
  std::string report_path;
  std::string emit_path;
  std::string fn_name = "kernel";
  femopt_options opt;
  femopt_options_init(&opt);
  bool no_preeval = false, no_zeroskip = false, trace = false;
  int rounds = 5;
  double tol = 1e-10;

  auto add_opt_flags = [&](CLI::App* cmd) {
    cmd->add_option("--th", opt.memory_limit,
                    "pre-evaluated table budget in bytes");
    cmd->add_flag("--no-preeval", no_preeval, "disable table pre-evaluation");
    cmd->add_flag("--no-zero-skip", no_zeroskip, "disable zero-block loop splitting");
    cmd->add_flag("--trace", trace, "record per-pass details in the report");
  };

  CLI::App* cmd_opt = app.add_subcommand("optimize", "optimize a kernel");
  cmd_opt->add_option("input", input, "kernel JSON file")->required();
  cmd_opt->add_option("-o,--output", output, "write optimized kernel JSON here");
  cmd_opt->add_option("--report", report_path, "write the JSON report here");
  cmd_opt->add_option("--emit-c", emit_path, "write generated C code here");
  cmd_opt->add_option("--fn", fn_name, "name of the emitted C function");
  add_opt_flags(cmd_opt);

  CLI::App* cmd_count = app.add_subcommand("count", "print a kernel's operation count");
  cmd_count->add_option("input", input, "kernel JSON file")->required();

  CLI::App* cmd_verify =
      app.add_subcommand("verify", "optimize and check against the reference semantics");
  cmd_verify->add_option("input", input, "kernel JSON file")->required();
  cmd_verify->add_option("--rounds", rounds, "randomized trials");
  cmd_verify->add_option("--tol", tol, "relative error tolerance");
  add_opt_flags(cmd_verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  opt.enable_preeval = no_preeval ? 0 : 1;
  opt.enable_zero_skip = no_zeroskip ? 0 : 1;
  opt.trace = trace ? 1 : 0;

  femopt_kernel* k = nullptr;
  if (int rc = femopt_kernel_read(input.c_str(), &k)) return fail(rc);

  int status = 0;
  if (cmd_count->parsed()) {
    unsigned long long flops = 0;
    if (int rc = femopt_kernel_flops(k, &flops)) status = fail(rc);
    else std::cout << flops << "\n";
  } else if (cmd_verify->parsed()) {
    double worst = 0.0;
    if (int rc = femopt_verify(k, &opt, rounds, tol, &worst)) {
      status = fail(rc);
    } else {
      std::printf("ok: %d rounds, max relative error %.3e\n", rounds, worst);
    }
  } else {
    femopt_kernel* res = nullptr;
    char* report = nullptr;
    if (int rc = femopt_optimize(k, &opt, &res, &report)) {
      status = fail(rc);
    } else {
      if (!report_path.empty()) {
        if (!write_file(report_path, report)) {
          std::cerr << "error: cannot write " << report_path << "\n";
          status = 1;
        }
      }
      char* text = nullptr;
      if (status == 0) {
        if (int rc = femopt_kernel_to_json(res, &text)) status = fail(rc);
      }
      if (status == 0) {
        if (output.empty()) {
          std::cout << text;
        } else if (!write_file(output, text)) {
          std::cerr << "error: cannot write " << output << "\n";
          status = 1;
        }
      }
      femopt_string_free(text);
      if (status == 0 && !emit_path.empty()) {
        char* code = nullptr;
        if (int rc = femopt_emit_c(res, fn_name.c_str(), &code)) {
          status = fail(rc);
        } else if (!write_file(emit_path, code)) {
          std::cerr << "error: cannot write " << emit_path << "\n";
          status = 1;
        }
        femopt_string_free(code);
      }
      femopt_string_free(report);
      femopt_kernel_free(res);
    }
  }

  femopt_kernel_free(k);
  return status;
}
