/* C interface of the PDMP engine. All functions return a pdmp_status; on
 * failure pdmp_last_error() describes the error (thread-local, valid until the
 * next call on the same thread). Strings returned through char** are owned
 * by the caller and released with pdmp_string_free. */
#ifndef PDMP_PDMP_H
#define PDMP_PDMP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PDMP_API __declspec(dllexport)
#else
#define PDMP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pdmp_status {
  PDMP_OK = 0,
  PDMP_ERR_USAGE = 1,
  PDMP_ERR_CONFIG = 2,
  PDMP_ERR_INCONCLUSIVE = 3,
  PDMP_ERR_INTERNAL = 4,
  PDMP_ERR_NUMERIC = 5,
  PDMP_ERR_BOUNDARY = 6,
  PDMP_ERR_PRECONDITION = 7,
  PDMP_ERR_ARGUMENT = 8
} pdmp_status;

typedef struct pdmp_model pdmp_model;

PDMP_API const char* pdmp_version(void);
PDMP_API const char* pdmp_last_error(void);
PDMP_API const char* pdmp_status_name(pdmp_status status);
PDMP_API void pdmp_string_free(char* s);

/* `spec` is a registered model name or a JSON model definition
 * {"family": ..., "parameters": ..., "grid": ...}. */
PDMP_API pdmp_status pdmp_model_create(const char* spec, pdmp_model** out);
PDMP_API void pdmp_model_destroy(pdmp_model* model);
/* Name, family, parameters, grid sizes, truncation and known answers. */
PDMP_API pdmp_status pdmp_model_info(const pdmp_model* model, char** json_out);
PDMP_API pdmp_status pdmp_model_dim(const pdmp_model* model, size_t* dim);

PDMP_API pdmp_status pdmp_flow_advance(const pdmp_model* model, const double* x, size_t dim,
  double t, double* out);
PDMP_API pdmp_status pdmp_cocycle(const pdmp_model* model, const double* x, size_t dim,
  double t, double* out);
/* forward != 0: t+(x); otherwise t-(x). +inf when never reached. */
PDMP_API pdmp_status pdmp_hit_time(const pdmp_model* model, const double* x, size_t dim,
  int forward, double* out);
PDMP_API pdmp_status pdmp_cumulative_hazard(const pdmp_model* model, const double* x, size_t dim,
  double t, double* out);

PDMP_API pdmp_status pdmp_norm_psipsi(const pdmp_model* model, double lambda, double* norm,
  double* spectral_radius);

/* Request: {"times": [...], "test_functions": [...], "initial": {...},
 * "paths": n, "seed": s, "max_jumps": m}. Result: estimates, standard errors
 * and explosion fractions as JSON. */
PDMP_API pdmp_status pdmp_mc_expectation(const pdmp_model* model, const char* request_json,
  char** result_json);

/* Runs a config file and writes its artifacts. `exit_code` receives the
 * process exit code of the run (0, 2, 3 or 4); the manifest or the error is
 * returned in `report_json`. */
PDMP_API pdmp_status pdmp_run_config_file(const char* path, int* exit_code, char** report_json);
PDMP_API pdmp_status pdmp_validate_config_file(const char* path, char** report_json);

/* JSON array of {name, source, family, parameters, known_answers}. */
PDMP_API pdmp_status pdmp_list_models(char** json_out);
PDMP_API pdmp_status pdmp_register_model_file(const char* path, char** name_out);

#ifdef __cplusplus
}
#endif

#endif
