#ifndef ROBUSTBETA_H
#define ROBUSTBETA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RB_API __declspec(dllexport)
#else
#define RB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rb_status {
  RB_OK = 0,
  RB_ERR_INVALID_ARGUMENT = 1,
  RB_ERR_DOMAIN = 2,
  RB_ERR_SINGULAR = 3,
  RB_ERR_NUMERICAL = 4,
  RB_ERR_BUFFER_TOO_SMALL = 5,
  RB_ERR_OUT_OF_MEMORY = 6,
  RB_ERR_INTERNAL = 7
} rb_status;

/* Outcome of an optimization; a fit handle exists whatever its status. */
typedef enum rb_fit_status {
  RB_FIT_CONVERGED = 0,
  RB_FIT_MAX_ITERATIONS = 1,
  RB_FIT_LINE_SEARCH_FAILED = 2,
  RB_FIT_NON_FINITE = 3,
  RB_FIT_SINGULAR_LAMBDA = 4,
  RB_FIT_NON_PSD_COVARIANCE = 5
} rb_fit_status;

typedef enum rb_stability_statistic {
  RB_STABILITY_Z = 0,
  RB_STABILITY_STANDARDIZED = 1
} rb_stability_statistic;

typedef struct rb_problem rb_problem;
typedef struct rb_fit rb_fit;
typedef struct rb_tuning rb_tuning;
typedef struct rb_envelope rb_envelope;
typedef struct rb_report rb_report;

typedef struct rb_fit_options {
  int max_iterations;
  double gradient_tolerance;
  int compute_covariance;
} rb_fit_options;

typedef struct rb_fit_info {
  int status; /* rb_fit_status */
  int iterations;
  double alpha;
  double objective;
  double gradient_norm;
  int has_covariance;
  size_t n;
  size_t p1;
  size_t p2;
} rb_fit_info;

typedef struct rb_tuning_options {
  double grid_step;
  double alpha_max;
  int window;
  int lookahead;
  double threshold_scale;
  int statistic; /* rb_stability_statistic */
  rb_fit_options fit;
} rb_tuning_options;

typedef struct rb_envelope_options {
  int replications;
  double coverage;
  uint64_t seed;
  int threads;
  int absolute;
} rb_envelope_options;

typedef struct rb_envelope_info {
  size_t n;
  int replications;
  int failed;
  int coarse;
  int unreliable;
  size_t outside;
} rb_envelope_info;

typedef struct rb_scenario {
  char scenario; /* 'A', 'B' or 'C' */
  size_t n;
  int contaminated;
  double contamination_rate;
  int replications;
  uint64_t seed;
  int threads;
} rb_scenario;

RB_API const char* rb_version(void);
/* Message of the last failed call on this thread; empty when none. */
RB_API const char* rb_last_error(void);
RB_API const char* rb_status_name(rb_status status);
RB_API const char* rb_fit_status_name(int status);

/* y has n entries; x is n-by-p1 and z is n-by-p2, both row-major. Links by name ("logit", "log"). */
RB_API rb_status rb_problem_create(const double* y, size_t n, const double* x, size_t p1,
                                   const double* z, size_t p2, const char* mean_link,
                                   const char* precision_link, rb_problem** out);
RB_API void rb_problem_free(rb_problem* problem);
RB_API rb_status rb_problem_dims(const rb_problem* problem, size_t* n, size_t* p1, size_t* p2);
RB_API rb_status rb_problem_response(const rb_problem* problem, double* y, size_t n);
/* Row-major copies of X (n-by-p1) and Z (n-by-p2); either pointer may be NULL. */
RB_API rb_status rb_problem_design(const rb_problem* problem, double* x, double* z);

RB_API void rb_fit_options_default(rb_fit_options* options);
/* estimator: "mle", "lsmle" or "lmdpde". options may be NULL. */
RB_API rb_status rb_fit_create(const rb_problem* problem, const char* estimator, double alpha,
                               const rb_fit_options* options, rb_fit** out);
RB_API void rb_fit_free(rb_fit* fit);
RB_API rb_status rb_fit_get_info(const rb_fit* fit, rb_fit_info* info);
RB_API rb_status rb_fit_estimator(const rb_fit* fit, char* buffer, size_t capacity, size_t* needed);
RB_API rb_status rb_fit_message(const rb_fit* fit, char* buffer, size_t capacity, size_t* needed);
/* theta and se hold p1 + p2 entries; se may be NULL and is NaN without a covariance. */
RB_API rb_status rb_fit_coefficients(const rb_fit* fit, double* theta, double* se, size_t p);
/* p-by-p row-major. Fails with RB_ERR_NUMERICAL when no covariance is available. */
RB_API rb_status rb_fit_covariance(const rb_fit* fit, double* covariance, size_t p);
RB_API rb_status rb_fit_weights(const rb_fit* fit, double* weights, size_t n);

/* Wald test of theta[coordinates[k]] = values[k], k < d. */
RB_API rb_status rb_wald_coordinates(const rb_fit* fit, const size_t* coordinates,
                                     const double* values, size_t d, double* statistic,
                                     int* df, double* p_value);
/* Same test from a stored estimate and p-by-p row-major covariance. */
RB_API rb_status rb_wald_coordinates_raw(const double* theta, const double* covariance, size_t p,
                                         const size_t* coordinates, const double* values,
                                         size_t d, double* statistic, int* df, double* p_value);
/* Linear restriction L theta = target, L d-by-p row-major. */
RB_API rb_status rb_wald_linear(const rb_fit* fit, const double* matrix, const double* target,
                                size_t d, double* statistic, int* df, double* p_value);

RB_API void rb_tuning_options_default(rb_tuning_options* options);
RB_API rb_status rb_tune(const rb_problem* problem, const char* estimator,
                         const rb_tuning_options* options, rb_tuning** out);
RB_API void rb_tuning_free(rb_tuning* tuning);
RB_API rb_status rb_tuning_result(const rb_tuning* tuning, double* alpha, int* stable,
                                  double* threshold, size_t* trace_length);
/* theta holds p entries or is NULL. */
RB_API rb_status rb_tuning_step(const rb_tuning* tuning, size_t index, double* alpha, double* sqv,
                                int* fit_status, double* theta, size_t p);
/* New fit handle holding the fit at the selected alpha. */
RB_API rb_status rb_tuning_selected(const rb_tuning* tuning, rb_fit** out);

/* n entries each; leverage may be NULL. Degenerate rows hold NaN. */
RB_API rb_status rb_residuals(const rb_problem* problem, const rb_fit* fit, double* residuals,
                              double* leverage, size_t n);
RB_API void rb_envelope_options_default(rb_envelope_options* options);
RB_API rb_status rb_envelope_create(const rb_problem* problem, const rb_fit* fit,
                                    const rb_envelope_options* options, rb_envelope** out);
RB_API void rb_envelope_free(rb_envelope* envelope);
RB_API rb_status rb_envelope_get_info(const rb_envelope* envelope, rb_envelope_info* info);
/* Each array holds n entries in sorted-residual order; any pointer may be NULL. */
RB_API rb_status rb_envelope_bands(const rb_envelope* envelope, double* residuals, double* lower,
                                   double* median, double* upper, double* theoretical, size_t n);

RB_API void rb_scenario_default(rb_scenario* scenario);
/* truth holds p entries or is NULL. */
RB_API rb_status rb_scenario_generate(const rb_scenario* scenario, int replication,
                                      rb_problem** out, double* truth, size_t p);
/* experiment: "failure" (uses alphas), "compare", or "levels" (fixed_alpha NaN means tuned). */
RB_API rb_status rb_simulate(const rb_scenario* scenario, const char* experiment,
                             const double* alphas, size_t alpha_count, double fixed_alpha,
                             const rb_tuning_options* tuning, rb_report** out);
RB_API void rb_report_free(rb_report* report);
RB_API rb_status rb_report_csv(const rb_report* report, char* buffer, size_t capacity,
                               size_t* needed);
RB_API rb_status rb_report_manifest(const rb_report* report, char* buffer, size_t capacity,
                                    size_t* needed);
/* Fraction over replications; NaN when the estimator is absent. alpha < 0 pools all settings. */
RB_API rb_status rb_report_failure_rate(const rb_report* report, const char* estimator,
                                        double alpha, double* rate);
RB_API rb_status rb_report_rejection_rate(const rb_report* report, const char* estimator,
                                          size_t hypothesis, double level, double* rate);
RB_API rb_status rb_report_median(const rb_report* report, const char* estimator,
                                  size_t coordinate, double* median);
/* Selected alphas in replication order; count receives the number of records. */
RB_API rb_status rb_report_alphas(const rb_report* report, const char* estimator, double* alphas,
                                  size_t capacity, size_t* count);

#ifdef __cplusplus
}
#endif

#endif
