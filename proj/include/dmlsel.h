/*
 * C interface to the sample-selection treatment effect estimators.
 *
 * All functions return a status code; on failure dmlsel_last_error() holds a
 * thread-local human-readable message. Strings returned through out-pointers
 * are owned by the caller and released with dmlsel_string_free(); datasets
 * are opaque handles released with dmlsel_dataset_free().
 *
 * Configuration goes in as JSON text and results come back as JSON (plus TSV
 * where a tabular rendering exists). The accepted keys match the CLI flags:
 * estimator, d, d_prime, K, seed, trim, design, reps, n, t_grid, delta_m,
 * threads, estimators, learners{lambda, cv_folds, max_iter, tol}.
 */

#ifndef DMLSEL_H
#define DMLSEL_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmlsel_status {
    DMLSEL_OK = 0,
    DMLSEL_ERROR_INVALID_ARGUMENT = 1,
    DMLSEL_ERROR_IO = 2,
    DMLSEL_ERROR_RUNTIME = 3
} dmlsel_status;

typedef struct dmlsel_dataset dmlsel_dataset;

const char* dmlsel_version(void);

/* Message for the most recent failure on this thread; empty if none. */
const char* dmlsel_last_error(void);

void dmlsel_string_free(char* s);

/* schema_json describes column roles:
 * {"outcome": ..., "selection": ..., "treatment": ..., "covariates": [...],
 *  "post_covariates": [...]?, "instrument": ...?, "levels": int}            */
dmlsel_status dmlsel_dataset_load_csv(const char* csv_path,
                                      const char* schema_json,
                                      dmlsel_dataset** out_dataset);

dmlsel_status dmlsel_dataset_write_csv(const dmlsel_dataset* dataset,
                                       const char* csv_path);

int dmlsel_dataset_rows(const dmlsel_dataset* dataset);
int dmlsel_dataset_levels(const dmlsel_dataset* dataset);

void dmlsel_dataset_free(dmlsel_dataset* dataset);

/* Treatment effect on a loaded dataset. config_json keys: estimator
 * (mar|iv-total|iv-selected|dynamic), d, d_prime (null for a single mean
 * potential outcome), K, seed, trim, threads, learners. */
dmlsel_status dmlsel_estimate(const dmlsel_dataset* dataset,
                              const char* config_json, char** out_json);

/* Monte Carlo study. config_json keys: design (1|2|dynamic), n (int or
 * array), reps, seed (required), estimators, K, trim, delta_m, threads. */
dmlsel_status dmlsel_simulate(const char* config_json, char** out_json,
                              char** out_tsv);

/* Orthogonality probe. config_json keys: design, n, seed, t_grid, threads. */
dmlsel_status dmlsel_probe(const char* config_json, char** out_json,
                           char** out_tsv);

#ifdef __cplusplus
}
#endif

#endif /* DMLSEL_H */
