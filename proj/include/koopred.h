/*
 * koopred C API: sparse Koopman/EDMD identification with spike-and-slab
 * variational inference and graph-based dictionary reduction.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return KR_OK on success; on failure they return a status code
 * and kr_last_error() carries a thread-local message. Strings returned
 * through char** outputs are heap-allocated and must be released with
 * kr_string_free().
 */
#ifndef KOOPRED_H
#define KOOPRED_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kr_status {
  KR_OK = 0,
  KR_ERR_USAGE = 1,   /* bad arguments or configuration */
  KR_ERR_DATA = 2,    /* malformed or degenerate data */
  KR_ERR_NUMERIC = 3, /* numeric failure during computation */
  KR_ERR_IO = 4       /* file system failure */
} kr_status;

typedef struct kr_dataset kr_dataset;
typedef struct kr_dictionary kr_dictionary;
typedef struct kr_model kr_model;

const char* kr_version(void);
const char* kr_last_error(void);
void kr_string_free(char* s);

/* ---- datasets -------------------------------------------------------- */

/* CSV layout: optional `# dt=<seconds>` comment, header row, one sample per
 * row; the first n_states columns are states, the next n_inputs are inputs. */
kr_status kr_dataset_load_csv(const char* path, int n_states, int n_inputs,
                              kr_dataset** out);
kr_status kr_dataset_save_csv(const kr_dataset* d, const char* path);

/* system_json: {"type":"lorenz"|"usv", ...} as documented in the README. */
kr_status kr_dataset_simulate(const char* system_json, uint64_t seed, kr_dataset** out);

/* Per-column Gaussian measurement noise at snr_db; inputs stay untouched. */
kr_status kr_dataset_add_noise(const kr_dataset* d, double snr_db, uint64_t seed,
                               kr_dataset** out);

kr_status kr_dataset_delay_embed(const kr_dataset* d, int delays, kr_dataset** out);

int kr_dataset_rows(const kr_dataset* d);
int kr_dataset_n_states(const kr_dataset* d);
int kr_dataset_n_inputs(const kr_dataset* d);
double kr_dataset_dt(const kr_dataset* d);
void kr_dataset_free(kr_dataset* d);

/* ---- dictionaries ----------------------------------------------------- */

/* Builds a dictionary from a raw training dataset and a JSON config
 * ({"delays":..,"gaussian":{...},"periodic":{...}}); kernel centers come
 * from k-means clustering of the (embedded) states. */
kr_status kr_dictionary_build(const kr_dataset* train, const char* config_json,
                              uint64_t seed, kr_dictionary** out);
kr_status kr_dictionary_from_json(const char* json_text, kr_dictionary** out);
kr_status kr_dictionary_to_json(const kr_dictionary* dict, char** out_json);
int kr_dictionary_size(const kr_dictionary* dict);
int kr_dictionary_n_inputs(const kr_dictionary* dict);
int kr_dictionary_state_dim(const kr_dictionary* dict);    /* post-embedding */
int kr_dictionary_embed_delays(const kr_dictionary* dict);
void kr_dictionary_free(kr_dictionary* dict);

/* Writes the design matrix (observables then inputs) and the per-observable
 * targets for a dataset as one CSV. */
kr_status kr_design_matrix_csv(const kr_dataset* d, const kr_dictionary* dict,
                               const char* out_path);

/* ---- models ----------------------------------------------------------- */

/* method: "I" pseudoinverse, "II" sequential thresholded least squares,
 * "III" sparse Bayesian learning, "IV" spike-and-slab variational
 * inference. options_json (may be NULL): {"priors":{...},"stls_lambda":..,
 * "stls_max_rounds":..,"sbl":{"max_iter":..,"tol":..},"threads":..}. */
kr_status kr_fit(const kr_dataset* train, const kr_dictionary* dict, const char* method,
                 const char* options_json, kr_model** out);

kr_status kr_model_to_json(const kr_model* m, char** out_json);
kr_status kr_model_from_json(const char* json_text, kr_model** out);

/* The dictionary a model was fitted with, as a fresh handle. */
kr_status kr_model_dictionary(const kr_model* m, kr_dictionary** out);

/* Thresholds the model's inclusion matrix at epsilon, keeps the output
 * observables plus every graph ancestor, and returns the reduced dictionary
 * together with an old-index -> new-index map (JSON array, -1 = dropped).
 * Requires a model fitted with method IV. */
kr_status kr_model_reduce(const kr_model* m, double epsilon, kr_dictionary** out_dict,
                          char** out_index_map_json);

/* One-step prediction NMSE per output state; returns CSV "state,nmse". */
kr_status kr_model_evaluate(const kr_model* m, const kr_dataset* data, char** out_csv);

/* |K_F| magnitudes with labels and an exact-zero mask column. */
kr_status kr_model_heatmap_csv(const kr_model* m, const char* out_path);

void kr_model_free(kr_model* m);

/* ---- experiment harness ----------------------------------------------- */

/* Runs the full Monte Carlo SNR sweep described by the config file and
 * writes nmse.csv, sizes.csv and models/*.json under out_dir. Paths inside
 * the config resolve relative to the config file. */
kr_status kr_run_sweep(const char* config_path, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* KOOPRED_H */
