/* C interface to the structured sparse non-negative least squares library. */
#ifndef SSNLS_H
#define SSNLS_H

#include <stddef.h>
#include <stdint.h>

#if defined(SSNLS_BUILDING_LIBRARY)
#define SSNLS_API __attribute__((visibility("default")))
#else
#define SSNLS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssnls_status {
  SSNLS_OK = 0,
  SSNLS_ERR_SHAPE = 1,
  SSNLS_ERR_DOMAIN = 2,
  SSNLS_ERR_CONFIG = 3,
  SSNLS_ERR_DEGENERATE = 4,
  SSNLS_ERR_NONCONVERGENCE = 5,
  SSNLS_ERR_STALL = 6,
  SSNLS_ERR_IO = 7,
  SSNLS_ERR_INTERNAL = 8
} ssnls_status;

typedef enum ssnls_family {
  SSNLS_HOYER_RATIO = 0, /* l1/l2 with dummy variables, dynamic c_n */
  SSNLS_DIFF_L1_L2 = 1   /* smoothed l1 - l2, fixed C */
} ssnls_family;

typedef struct ssnls_dictionary ssnls_dictionary;
typedef struct ssnls_result ssnls_result;

/* Message of the last failed call on this thread; never NULL. */
SSNLS_API const char* ssnls_last_error(void);
SSNLS_API const char* ssnls_version(void);

/* W x N column-major entries. group_offsets has n_groups + 1 entries from 0 to
 * N; NULL means a single group. free_groups (may be NULL) flags groups whose
 * coefficients are sign-free and unpenalized. With normalize != 0 the columns
 * are scaled to unit norm, otherwise they must already be. */
SSNLS_API ssnls_status ssnls_dictionary_create(const double* entries, int64_t rows, int64_t cols,
                                               const int64_t* group_offsets, int64_t n_groups,
                                               const int* free_groups, int normalize, ssnls_dictionary** out);
SSNLS_API void ssnls_dictionary_destroy(ssnls_dictionary* dict);
SSNLS_API int64_t ssnls_dictionary_rows(const ssnls_dictionary* dict);
SSNLS_API int64_t ssnls_dictionary_cols(const ssnls_dictionary* dict);
SSNLS_API int64_t ssnls_dictionary_groups(const ssnls_dictionary* dict);
/* Original column norms (length cols). */
SSNLS_API ssnls_status ssnls_dictionary_scales(const ssnls_dictionary* dict, double* out);

typedef struct ssnls_options {
  ssnls_family family;
  double gamma_intra; /* same weight for every constrained group */
  double eps_intra;
  double gamma_inter;
  double eps_inter;
  int64_t min_active_groups;
  double sigma, xi1, xi2;
  double c_matrix_scale;
  double tol_energy;
  double tol_step;
  int max_outer;
  double admm_delta; /* <= 0 selects the trace-based default */
  double admm_tol;
  int admm_max_iters;
} ssnls_options;

/* Library defaults for the given family. */
SSNLS_API void ssnls_options_default(ssnls_family family, ssnls_options* out);

/* Minimizes the penalized objective from the default constant start. */
SSNLS_API ssnls_status ssnls_solve(const ssnls_dictionary* dict, const double* b, int64_t len,
                                   const ssnls_options* options, ssnls_result** out);
SSNLS_API void ssnls_result_destroy(ssnls_result* result);
SSNLS_API int64_t ssnls_result_size(const ssnls_result* result);
SSNLS_API ssnls_status ssnls_result_coeffs(const ssnls_result* result, double* out, int64_t len);
SSNLS_API int ssnls_result_outer_iters(const ssnls_result* result);
SSNLS_API int ssnls_result_inner_iters(const ssnls_result* result);
/* "step_tol", "energy_tol" or "max_iters". */
SSNLS_API const char* ssnls_result_termination(const ssnls_result* result);
SSNLS_API int64_t ssnls_result_trace_length(const ssnls_result* result);
SSNLS_API ssnls_status ssnls_result_trace(const ssnls_result* result, double* out, int64_t len);

/* Baselines. x has length cols. */
SSNLS_API ssnls_status ssnls_nnls(const ssnls_dictionary* dict, const double* b, int64_t len, double* x);
SSNLS_API ssnls_status ssnls_l1_penalized(const ssnls_dictionary* dict, const double* b, int64_t len, double gamma,
                                          double* x);
SSNLS_API ssnls_status ssnls_l1_constrained(const ssnls_dictionary* dict, const double* b, int64_t len, double tau,
                                            double* x);
SSNLS_API ssnls_status ssnls_l0_penalty_decomposition(const ssnls_dictionary* dict, const double* b, int64_t len,
                                                      double* x);

/* Runs an experiment described by a JSON config (see docs/config.schema.json).
 * output_dir, when not NULL, overrides the config. On success *record_json
 * receives the run record, to be released with ssnls_string_free. */
SSNLS_API ssnls_status ssnls_run_experiment(const char* config_json, const char* output_dir, char** record_json);
/* Fully resolved config (defaults filled) for a JSON config. */
SSNLS_API ssnls_status ssnls_resolve_config(const char* config_json, char** resolved_json);
SSNLS_API void ssnls_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
