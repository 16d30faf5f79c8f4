/* femopt — flop-minimizing optimizer for finite element assembly kernels.
 *
 * C interface to the shared library. All functions returning int use 0 for
 * success and a femopt_error code otherwise; the message for the most recent
 * failure on the calling thread is available via femopt_last_error().
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with femopt_string_free().
 */
#ifndef FEMOPT_H
#define FEMOPT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct femopt_kernel femopt_kernel;

typedef enum femopt_error {
  FEMOPT_OK = 0,
  FEMOPT_ERR_PARSE = 1,
  FEMOPT_ERR_UNKNOWN_LOOP = 2,
  FEMOPT_ERR_NOT_FEM_NEST = 3,
  FEMOPT_ERR_NON_DISTRIBUTABLE = 4,
  FEMOPT_ERR_NON_SEPARABLE = 5,
  FEMOPT_ERR_NOT_NORMAL_FORM = 6,
  FEMOPT_ERR_TOO_MANY_MONOMIALS = 7,
  FEMOPT_ERR_INCONSISTENT_LAYOUT = 8,
  FEMOPT_ERR_INVALID_ARG = 9,
  FEMOPT_ERR_IO = 10,
  FEMOPT_ERR_INTERNAL = 11,
} femopt_error;

typedef struct femopt_options {
  size_t memory_limit;   /* pre-evaluated table budget in bytes */
  int enable_preeval;    /* nonzero: consider table pre-evaluation */
  int enable_zero_skip;  /* nonzero: split loops over zero-padded tables */
  int trace;             /* nonzero: include a rewriting trace in the report */
} femopt_options;

/* Fills `opt` with the defaults (256 KiB budget, everything enabled,
 * no trace). */
void femopt_options_init(femopt_options* opt);

/* Parses a kernel from its JSON description (text or file). On success,
 * *out receives a handle that must be released with femopt_kernel_free(). */
int femopt_kernel_parse(const char* json_text, femopt_kernel** out);
int femopt_kernel_read(const char* path, femopt_kernel** out);
void femopt_kernel_free(femopt_kernel* k);

/* Operation count of the kernel as written. */
int femopt_kernel_flops(const femopt_kernel* k, unsigned long long* out);

/* Runs the optimizer. On success *out receives the transformed kernel and,
 * when report_json is non-NULL, *report_json receives the JSON report. */
int femopt_optimize(const femopt_kernel* k, const femopt_options* opt,
                    femopt_kernel** out, char** report_json);

/* Serializes the kernel back to its JSON description. */
int femopt_kernel_to_json(const femopt_kernel* k, char** out);

/* Emits a standalone C function named `fn_name` implementing the kernel. */
int femopt_emit_c(const femopt_kernel* k, const char* fn_name, char** out);

/* Optimizes `k` under `opt` and compares the result against the original on
 * `rounds` randomized inputs; *max_rel_error receives the worst relative
 * error observed. Fails with FEMOPT_ERR_INTERNAL if it exceeds `tolerance`. */
int femopt_verify(const femopt_kernel* k, const femopt_options* opt,
                  int rounds, double tolerance, double* max_rel_error);

/* Message for the most recent failure on this thread ("" if none). The
 * returned pointer is valid until the next femopt call on the thread. */
const char* femopt_last_error(void);

void femopt_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* FEMOPT_H */
