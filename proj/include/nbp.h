/* Neural bridge process toolkit - public C API.
 *
 * All functions return NBP_OK (0) on success or a status code mirroring the
 * CLI exit codes: 1 invalid input, 2 numerical failure, 3 I/O failure. On
 * failure, nbp_last_error() returns a human-readable message for the calling
 * thread. Opaque handles must be released with their matching _free call.
 * Strings returned through char** outputs are heap-allocated; release them
 * with nbp_string_free.
 */

#ifndef NBP_H
#define NBP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nbp_status {
    NBP_OK = 0,
    NBP_ERR_INVALID = 1,
    NBP_ERR_NUMERIC = 2,
    NBP_ERR_IO = 3
} nbp_status;

const char* nbp_version(void);
const char* nbp_last_error(void);
void nbp_string_free(char* s);

/* ---- noise schedule ---------------------------------------------------- */

typedef struct nbp_schedule nbp_schedule;

/* kind: "cosine" or "linear". zero_bridge != 0 forces gamma to zero (the
 * plain-diffusion ablation). */
nbp_status nbp_schedule_create(const char* kind, int timesteps, double beta_start, double beta_end,
                               int zero_bridge, nbp_schedule** out);
void nbp_schedule_free(nbp_schedule* s);
int nbp_schedule_timesteps(const nbp_schedule* s);

/* name: beta, alpha, alpha_bar, snr, gamma, gamma_bar, beta_tilde, c_bridge.
 * alpha_bar and gamma_bar accept t = 0. */
nbp_status nbp_schedule_coeff(const nbp_schedule* s, const char* name, int t, double* out);

/* CSV columns: t,beta,alpha_bar,snr,gamma,gamma_bar,beta_tilde,c_bridge */
nbp_status nbp_schedule_dump_csv(const nbp_schedule* s, const char* path);

/* ---- workflow ----------------------------------------------------------
 * config_path names a run-config JSON document (schema version 1). Where a
 * seed parameter is negative, the seed from the config file is used.
 */

nbp_status nbp_gen_data(const char* config_path, const char* out_path, long long seed);

/* resume_checkpoint may be NULL. Writes metrics.csv, checkpoint.nbp and
 * config.json under out_dir. */
nbp_status nbp_train(const char* config_path, const char* out_dir, const char* resume_checkpoint,
                     long long seed);

/* Draws conditional samples for one task of the task file and writes a CSV
 * with columns sample,point,x...,y.... */
nbp_status nbp_sample(const char* checkpoint_path, const char* task_file, int task_index, int n_samples,
                      int repaint, long long seed, const char* out_csv);

/* Evaluates every task in the file; writes per-task records as CSV and
 * aggregates as JSON (either path may be NULL to skip). */
nbp_status nbp_evaluate(const char* checkpoint_path, const char* task_file, int n_samples, int repaint,
                        long long seed, const char* label, const char* out_csv, const char* out_json);

/* Diff table and win/loss verdict between two evaluation report JSONs. The
 * table text is returned through table_out. out_json may be NULL. */
nbp_status nbp_compare(const char* report_a, const char* report_b, const char* out_json, char** table_out);

/* Static SVG emission. task_file may be NULL (no context/target overlay). */
nbp_status nbp_plot_samples(const char* samples_csv, const char* task_file, int task_index,
                            const char* out_svg);
nbp_status nbp_plot_losses(const char* const* metrics_csvs, const char* const* labels, int count,
                           const char* out_svg);

/* Runs the identity suite. The pass/fail table is returned through
 * table_out; *n_failed receives the number of failing checks. inject_fault
 * is a test fixture (NULL, "" or "c-bridge-sign-flip"). */
nbp_status nbp_verify(const char* inject_fault, char** table_out, int* n_failed);

#ifdef __cplusplus
}
#endif

#endif /* NBP_H */
