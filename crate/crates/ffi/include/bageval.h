#ifndef BAGEVAL_H
#define BAGEVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call. The config, data and numerical codes
 equal the CLI exit codes.
 */
typedef enum BagevalStatus {
  BAGEVAL_STATUS_OK = 0,
  BAGEVAL_STATUS_CONFIG = 2,
  BAGEVAL_STATUS_DATA = 3,
  BAGEVAL_STATUS_NUMERICAL = 4,
  BAGEVAL_STATUS_NULL_POINTER = 10,
  BAGEVAL_STATUS_INVALID_UTF8 = 11,
  BAGEVAL_STATUS_PANIC = 12,
} BagevalStatus;

/*
 A validated, labeled cohort.
 */
typedef struct BagevalCohort BagevalCohort;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *bageval_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next library call on the same thread.
 */
const char *bageval_last_error_message(void);

/*
 JSON error object of the last failed call on this thread, or NULL.
 */
const char *bageval_last_error_json(void);

/*
 Releases a string returned by the library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void bageval_string_free(char *s);

/*
 Reads a session CSV file.

 # Safety
 `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BagevalStatus bageval_cohort_from_csv_path(const char *path, struct BagevalCohort **out);

/*
 Parses a session table held in memory (CSV text with header).

 # Safety
 `text` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BagevalStatus bageval_cohort_from_csv_text(const char *text, struct BagevalCohort **out);

/*
 Simulates a cohort from a named scenario (`paper-default`, `frailty-linked`).

 # Safety
 `scenario` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BagevalStatus bageval_cohort_simulate(const char *scenario,
                                           uintptr_t n_participants,
                                           uint64_t seed,
                                           struct BagevalCohort **out);

/*
 Releases a cohort. NULL is ignored.

 # Safety
 `cohort` must come from this library and not have been freed.
 */
void bageval_cohort_free(struct BagevalCohort *cohort);

/*
 Number of sessions; 0 for NULL.

 # Safety
 `cohort` must be NULL or a live handle.
 */
uintptr_t bageval_cohort_n_sessions(const struct BagevalCohort *cohort);

/*
 Number of participants; 0 for NULL.

 # Safety
 `cohort` must be NULL or a live handle.
 */
uintptr_t bageval_cohort_n_participants(const struct BagevalCohort *cohort);

/*
 Writes the cohort as a session CSV.

 # Safety
 `cohort` must be a live handle; `path` a NUL-terminated string.
 */
enum BagevalStatus bageval_cohort_write_csv(const struct BagevalCohort *cohort, const char *path);

/*
 Mann–Whitney AUC; `labels` holds 0 / nonzero.

 # Safety
 `scores` and `labels` must point to `n` elements; `out` must be valid.
 */
enum BagevalStatus bageval_auc(const double *scores,
                               const uint8_t *labels,
                               uintptr_t n,
                               double *out);

/*
 Two-sided Wilcoxon signed-rank test (exact for small samples).

 # Safety
 `diffs` must point to `n` elements; the out-pointers must be valid.
 */
enum BagevalStatus bageval_wilcoxon(const double *diffs,
                                    uintptr_t n,
                                    double *out_statistic,
                                    double *out_p_value);

/*
 Harrell's concordance index; `event` holds 0 / nonzero.

 # Safety
 The three arrays must point to `n` elements; `out` must be valid.
 */
enum BagevalStatus bageval_harrell_c(const double *time,
                                     const uint8_t *event,
                                     const double *risk,
                                     uintptr_t n,
                                     double *out);

/*
 LOOCV classification with bootstrapped accuracy and AUC, as a JSON array
 with one row per classifier. `groups` and `classifiers` are
 comma-separated (e.g. `"CN_stable,AD"`, `"logreg,svm"`).

 # Safety
 String arguments must be NUL-terminated; `out_json` must be valid.
 */
enum BagevalStatus bageval_classify_json(const struct BagevalCohort *cohort,
                                         const char *groups,
                                         const char *feature_set,
                                         const char *classifiers,
                                         uintptr_t n_bootstrap,
                                         uint64_t seed,
                                         char **out_json);

/*
 Cox comparison rows (C-index, AIC, likelihood-ratio test) as JSON.
 `scenarios` is comma-separated, e.g. `"basic,gm_ours"`.

 # Safety
 String arguments must be NUL-terminated; `out_json` must be valid.
 */
enum BagevalStatus bageval_survival_json(const struct BagevalCohort *cohort,
                                         const char *scenarios,
                                         const char *added,
                                         uintptr_t n_bootstrap,
                                         uint64_t seed,
                                         char **out_json);

/*
 Life table as CSV text
 (`interval_start,interval_end,n_at_risk,n_events,n_censored`).

 # Safety
 `cohort` must be a live handle; `out_csv` must be valid.
 */
enum BagevalStatus bageval_life_table_csv(const struct BagevalCohort *cohort,
                                          double width,
                                          char **out_csv);

/*
 Runs a TOML pipeline config; writes the manifest JSON to `out_manifest`
 (may be NULL).

 # Safety
 `config_path` must be NUL-terminated; `out_manifest` NULL or valid.
 */
enum BagevalStatus bageval_run_config(const char *config_path, char **out_manifest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAGEVAL_H */
