#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <femopt.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "kernels.hpp"

namespace {

std::string kernel_text() { return corpus::poisson_json(1, 3, 3, 3).dump(); }

struct Cmd {
  int status = -1;
  std::string out;
};

Cmd run(const std::string& args) {
  Cmd r;
  std::string cmd = std::string(FEMOPT_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string write_tmp(const std::string& text, const std::string& name) {
  std::string path = "/tmp/femopt_capi_" + name;
  std::ofstream f(path);
  f << text;
  return path;
}

}  // namespace

TEST_CASE("options defaults") {
  femopt_options opt;
  memset(&opt, 0xff, sizeof opt);
  femopt_options_init(&opt);
  CHECK(opt.memory_limit == 262144);
  CHECK(opt.enable_preeval != 0);
  CHECK(opt.enable_zero_skip != 0);
  CHECK(opt.trace == 0);
}

TEST_CASE("parse, count, optimize, serialize, emit through the C API") {
  femopt_kernel* k = nullptr;
  REQUIRE(femopt_kernel_parse(kernel_text().c_str(), &k) == FEMOPT_OK);
  REQUIRE(k != nullptr);

  unsigned long long before = 0;
  CHECK(femopt_kernel_flops(k, &before) == FEMOPT_OK);
  CHECK(before > 0);

  femopt_options opt;
  femopt_options_init(&opt);
  femopt_kernel* o = nullptr;
  char* report = nullptr;
  REQUIRE(femopt_optimize(k, &opt, &o, &report) == FEMOPT_OK);
  REQUIRE(o != nullptr);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("\"flops_input\"") != std::string::npos);
  femopt_string_free(report);

  unsigned long long after = 0;
  CHECK(femopt_kernel_flops(o, &after) == FEMOPT_OK);
  CHECK(after <= before);

  char* json = nullptr;
  REQUIRE(femopt_kernel_to_json(o, &json) == FEMOPT_OK);
  CHECK(std::string(json).find("\"body\"") != std::string::npos);
  femopt_string_free(json);

  char* csrc = nullptr;
  REQUIRE(femopt_emit_c(o, "poisson", &csrc) == FEMOPT_OK);
  CHECK(std::string(csrc).find("void poisson(") != std::string::npos);
  femopt_string_free(csrc);

  double err = 1.0;
  CHECK(femopt_verify(k, &opt, 3, 1e-10, &err) == FEMOPT_OK);
  CHECK(err < 1e-10);

  femopt_kernel_free(o);
  femopt_kernel_free(k);
}

TEST_CASE("kernel_read loads from a file and reports IO failures") {
  std::string path = write_tmp(kernel_text(), "read.json");
  femopt_kernel* k = nullptr;
  REQUIRE(femopt_kernel_read(path.c_str(), &k) == FEMOPT_OK);
  femopt_kernel_free(k);

  femopt_kernel* bad = nullptr;
  CHECK(femopt_kernel_read("/nonexistent/kernel.json", &bad) == FEMOPT_ERR_IO);
  CHECK(bad == nullptr);
  CHECK(femopt_last_error()[0] != '\0');
}

TEST_CASE("error codes and last_error") {
  femopt_kernel* k = nullptr;
  CHECK(femopt_kernel_parse("{not json", &k) == FEMOPT_ERR_PARSE);
  CHECK(k == nullptr);
  CHECK(femopt_last_error()[0] != '\0');

  // Structurally invalid: unknown index in a loop list.
  CHECK(femopt_kernel_parse(
            R"({"indices":{"i":2},"loops":[{"index":"q"}],"tables":{},)"
            R"("statements":[],"outputs":[]})",
            &k) != FEMOPT_OK);
  CHECK(k == nullptr);

  // Null arguments.
  CHECK(femopt_kernel_parse(nullptr, &k) == FEMOPT_ERR_INVALID_ARG);
  CHECK(femopt_kernel_flops(nullptr, nullptr) == FEMOPT_ERR_INVALID_ARG);
  unsigned long long v;
  CHECK(femopt_kernel_flops(nullptr, &v) == FEMOPT_ERR_INVALID_ARG);
  CHECK(femopt_optimize(nullptr, nullptr, nullptr, nullptr) == FEMOPT_ERR_INVALID_ARG);

  // A successful call clears the message.
  femopt_kernel* ok = nullptr;
  REQUIRE(femopt_kernel_parse(kernel_text().c_str(), &ok) == FEMOPT_OK);
  CHECK(femopt_last_error()[0] == '\0');
  femopt_kernel_free(ok);
}

TEST_CASE("cli: count and optimize") {
  std::string path = write_tmp(kernel_text(), "cli.json");
  Cmd c = run("count " + path);
  CHECK(c.status == 0);
  CHECK(std::stoull(c.out) > 0);

  std::string out = "/tmp/femopt_capi_out.json";
  std::string rep = "/tmp/femopt_capi_rep.json";
  std::string csrc = "/tmp/femopt_capi_out.c";
  Cmd o = run("optimize " + path + " -o " + out + " --report " + rep + " --emit-c " +
              csrc + " --fn poisson");
  CHECK(o.status == 0);
  std::ifstream rf(rep);
  std::string rtext((std::istreambuf_iterator<char>(rf)), {});
  CHECK(rtext.find("\"flops_output\"") != std::string::npos);
  std::ifstream cf(csrc);
  std::string ctext((std::istreambuf_iterator<char>(cf)), {});
  CHECK(ctext.find("void poisson(") != std::string::npos);

  // Tight memory budget disables pre-evaluation but still succeeds.
  Cmd t = run("optimize " + path + " --th 1 -o " + out);
  CHECK(t.status == 0);
}

TEST_CASE("cli: verify and error handling") {
  std::string path = write_tmp(kernel_text(), "cli2.json");
  Cmd v = run("verify " + path + " --rounds 3");
  CHECK(v.status == 0);

  Cmd usage = run("frobnicate");
  CHECK(usage.status == 2);

  std::string bad = write_tmp("{broken", "bad.json");
  Cmd e = run("count " + bad);
  CHECK(e.status == 1);
  CHECK(e.out.find("error:") != std::string::npos);
}
