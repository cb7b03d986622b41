/* probverif: probabilistic verification of feedforward-ReLU networks under
 * Gaussian input perturbation.
 *
 * C interface to the shared library. All objects are opaque handles with
 * create/free pairs; functions return pv_status and, on failure, may set
 * *err to a malloc'd message that the caller releases with pv_string_free.
 * Passing NULL for err is always allowed.
 */

#ifndef PROBVERIF_H
#define PROBVERIF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pv_status {
    PV_OK = 0,
    PV_ERR_INVALID_ARGUMENT = 1,
    PV_ERR_PARSE = 2,
    PV_ERR_DIMENSION = 3,
    PV_ERR_NONFINITE = 4,
    PV_ERR_IO = 5,
    PV_ERR_PRECONDITION = 6,
    PV_ERR_INTERNAL = 7,
} pv_status;

typedef enum pv_verdict {
    PV_VERDICT_TRUE = 0,
    PV_VERDICT_FALSE = 1,
    PV_VERDICT_TIMEOUT = 2, /* also: undecided */
} pv_verdict;

typedef struct pv_problem_t pv_problem_t;
typedef struct pv_config_t pv_config_t;
typedef struct pv_report_t pv_report_t;

const char* pv_version(void);

/* ------------------------------------------------------------------ */
/* Problems                                                            */

/* Load a problem JSON file; the referenced model path is resolved
 * relative to the problem file's directory. */
pv_status pv_problem_load(const char* path, pv_problem_t** out, char** err);

/* Parse problem JSON text; relative model paths resolve against base_dir
 * (may be NULL or ""). */
pv_status pv_problem_from_json(const char* json_text, const char* base_dir,
                               pv_problem_t** out, char** err);

void pv_problem_free(pv_problem_t* problem);

int pv_problem_input_dim(const pv_problem_t* problem);
double pv_problem_eta(const pv_problem_t* problem);

/* ------------------------------------------------------------------ */
/* Run configuration                                                   */

pv_config_t* pv_config_create(void);
void pv_config_free(pv_config_t* config);

/* mode: "bab" (default), "no-split", or "oracle". */
pv_status pv_config_set_mode(pv_config_t* config, const char* mode, char** err);
/* strategy: "ordered" (default) or "babsr-prob". */
pv_status pv_config_set_strategy(pv_config_t* config, const char* strategy,
                                 char** err);
void pv_config_set_tau(pv_config_t* config, double tau);
void pv_config_set_samples(pv_config_t* config, int64_t n_samples);
void pv_config_set_split_depth(pv_config_t* config, int split_depth);
void pv_config_set_batch_size(pv_config_t* config, int batch_size);
/* time_limit_s <= 0 disables the limit. */
void pv_config_set_time_limit(pv_config_t* config, double time_limit_s);
void pv_config_set_seed(pv_config_t* config, uint64_t seed);
/* Overrides the problem file's eta / truncation_z when >= 0. */
void pv_config_set_eta_override(pv_config_t* config, double eta);
void pv_config_set_z_override(pv_config_t* config, double z);
void pv_config_set_oracle_workers(pv_config_t* config, int workers);

/* ------------------------------------------------------------------ */
/* Verification                                                        */

/* Runs the configured mode on the problem. In "oracle" mode the report
 * carries the direct-sampling estimate in P_lower == P_upper and a
 * TRUE/FALSE verdict from comparing it against eta. */
pv_status pv_verify(const pv_problem_t* problem, const pv_config_t* config,
                    pv_report_t** out, char** err);

void pv_report_free(pv_report_t* report);

pv_verdict pv_report_verdict(const pv_report_t* report);
double pv_report_p_lower(const pv_report_t* report);
double pv_report_p_upper(const pv_report_t* report);
double pv_report_confidence(const pv_report_t* report);
int64_t pv_report_splits(const pv_report_t* report);
int64_t pv_report_branches(const pv_report_t* report);
double pv_report_wall_time(const pv_report_t* report);

/* JSON rendering of the report (documented schema). include_timing = 0
 * omits the wall-clock field so two identical runs compare byte-equal.
 * Returned string is malloc'd; release with pv_string_free. */
char* pv_report_to_json(const pv_report_t* report, int include_timing);

/* ------------------------------------------------------------------ */
/* Problem generation                                                  */

/* Build a local-robustness problem file: checks that the model classifies
 * x0 as `target` (argmax), then writes a problem with spec
 * c = e_target - e_attack, d = 0, mean = x0 and the given diagonal
 * covariance. cov_diag must have x0_len entries. Fails with
 * PV_ERR_PRECONDITION when x0 is misclassified. */
pv_status pv_make_robustness_problem(const char* model_path, const double* x0,
                                     size_t x0_len, const double* cov_diag,
                                     size_t cov_len, int target, int attack,
                                     double eta, double truncation_z,
                                     const char* out_path, char** err);

/* ------------------------------------------------------------------ */

void pv_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PROBVERIF_H */
