/* C API exercised from plain C. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "pdmp/pdmp.h"

static int failures = 0;

#define EXPECT(cond)                                                        \
  do {                                                                      \
    if (!(cond)) {                                                          \
      fprintf(stderr, "%s:%d: expectation failed: %s (last error: %s)\n",   \
        __FILE__, __LINE__, #cond, pdmp_last_error());                      \
      ++failures;                                                           \
    }                                                                       \
  } while (0)

static int near(double a, double b, double tol) { return fabs(a - b) <= tol; }

int main(void)
{
  pdmp_model* gene = NULL;
  pdmp_model* net = NULL;
  pdmp_model* bad = NULL;
  double x[2], y[2], v = 0.0, rho = 0.0;
  size_t dim = 0;
  char* s = NULL;

  EXPECT(strcmp(pdmp_version(), "1.0.0") == 0);
  EXPECT(strcmp(pdmp_status_name(PDMP_ERR_CONFIG), "config") == 0);

  EXPECT(pdmp_model_create("gene", &gene) == PDMP_OK);
  EXPECT(pdmp_model_create("{\"family\": \"network\"}", &net) == PDMP_OK);
  EXPECT(pdmp_model_create("nonexistent", &bad) == PDMP_ERR_CONFIG);
  EXPECT(bad == NULL);
  EXPECT(strlen(pdmp_last_error()) > 0);
  EXPECT(pdmp_model_create("{\"family\": ", &bad) == PDMP_ERR_CONFIG);
  EXPECT(pdmp_model_create(NULL, &bad) == PDMP_ERR_ARGUMENT);

  EXPECT(pdmp_model_dim(gene, &dim) == PDMP_OK && dim == 2);

  x[0] = 2.0;
  x[1] = 0.0;
  EXPECT(pdmp_flow_advance(gene, x, 2, log(2.0), y) == PDMP_OK);
  EXPECT(near(y[0], 1.0, 1e-13) && near(y[1], log(2.0), 1e-13));
  EXPECT(pdmp_cocycle(gene, x, 2, log(2.0), &v) == PDMP_OK && near(v, 0.5, 1e-13));
  EXPECT(pdmp_hit_time(gene, x, 2, 1, &v) == PDMP_OK && isinf(v));
  EXPECT(pdmp_cumulative_hazard(gene, x, 2, 0.7, &v) == PDMP_OK && near(v, 0.7, 1e-13));
  EXPECT(pdmp_flow_advance(gene, x, 3, 1.0, y) == PDMP_ERR_PRECONDITION);

  x[0] = 0.5;
  x[1] = 2.0;
  EXPECT(pdmp_hit_time(net, x, 2, 0, &v) == PDMP_OK && near(v, 0.25, 1e-14));
  EXPECT(pdmp_flow_advance(net, x, 2, 1.0, y) == PDMP_ERR_BOUNDARY);

  EXPECT(pdmp_norm_psipsi(gene, 1.0, &v, &rho) == PDMP_OK && near(v, 0.5, 1e-9));
  EXPECT(pdmp_norm_psipsi(gene, -1.0, &v, NULL) == PDMP_ERR_PRECONDITION);

  EXPECT(pdmp_mc_expectation(net, "{\"times\": [0.5, 1.0], \"paths\": 1000, \"seed\": 3}", &s) == PDMP_OK);
  EXPECT(s && strstr(s, "\"estimate\":[[1.0,1.0]]") != NULL);
  pdmp_string_free(s);
  s = NULL;
  EXPECT(pdmp_mc_expectation(net, "{\"times\": [0.5], \"initial\": {\"type\": \"cloud\"}}", &s)
    == PDMP_ERR_CONFIG);

  EXPECT(pdmp_model_info(net, &s) == PDMP_OK && strstr(s, "\"family\": \"network\"") != NULL);
  pdmp_string_free(s);
  s = NULL;

  EXPECT(pdmp_list_models(&s) == PDMP_OK && strstr(s, "\"slab\"") != NULL);
  pdmp_string_free(s);
  s = NULL;

  EXPECT(pdmp_register_model_file("/nonexistent/model.json", &s) == PDMP_ERR_CONFIG);
  EXPECT(pdmp_validate_config_file("/nonexistent/config.json", &s) == PDMP_ERR_CONFIG);
  pdmp_string_free(s);
  s = NULL;

  pdmp_model_destroy(gene);
  pdmp_model_destroy(net);
  pdmp_model_destroy(NULL);
  pdmp_string_free(NULL);

  if (failures)
    fprintf(stderr, "%d failure(s)\n", failures);
  else
    printf("capi: all checks passed\n");
  return failures ? 1 : 0;
}
