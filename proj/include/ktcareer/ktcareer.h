/* C interface to the ktcareer library. All functions are thread-safe with
 * respect to distinct handles; error text is kept per thread. */
#ifndef KTCAREER_KTCAREER_H
#define KTCAREER_KTCAREER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(KTC_BUILDING_LIBRARY)
#    define KTC_API __declspec(dllexport)
#  else
#    define KTC_API __declspec(dllimport)
#  endif
#else
#  define KTC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ktc_status {
  KTC_OK = 0,
  KTC_ERR_VALIDATION = 1,
  KTC_ERR_NUMERICAL = 2,
  KTC_ERR_DEPENDENCY = 3,
  KTC_ERR_IO = 4,
  KTC_ERR_UNSUPPORTED = 5,
  KTC_ERR_INTERNAL = 6
} ktc_status;

typedef struct ktc_run_config ktc_run_config;
typedef struct ktc_dkt_model ktc_dkt_model;
typedef struct ktc_classifier ktc_classifier;

KTC_API const char* ktc_version(void);

/* Message of the last failed call on this thread ("" if none). */
KTC_API const char* ktc_last_error(void);

/* Process exit code for a status: 0 ok, 1 validation/io, 2 numerical, 3 dependency. */
KTC_API int ktc_exit_code(ktc_status status);

/* Run configuration */
KTC_API ktc_status ktc_run_config_load(const char* path, ktc_run_config** out);
KTC_API ktc_status ktc_run_config_new(ktc_run_config** out);
KTC_API ktc_status ktc_run_config_set(ktc_run_config* config, const char* key, const char* value);
KTC_API void ktc_run_config_free(ktc_run_config* config);

/* Runs one pipeline command: generate, train-kt, extract, train-predictor,
 * evaluate or analyze. Warnings of the last run are available afterwards. */
KTC_API ktc_status ktc_run_command(const ktc_run_config* config, const char* command);
KTC_API size_t ktc_warning_count(void);
KTC_API const char* ktc_warning(size_t index);

/* Knowledge tracing model */
KTC_API ktc_status ktc_dkt_load(const char* checkpoint_path, ktc_dkt_model** out);
KTC_API void ktc_dkt_free(ktc_dkt_model* model);
KTC_API size_t ktc_dkt_num_skills(const ktc_dkt_model* model);
KTC_API size_t ktc_dkt_hidden(const ktc_dkt_model* model);
/* Writes num_skills probabilities of the state after the last interaction. */
KTC_API ktc_status ktc_dkt_last_state(const ktc_dkt_model* model, const uint32_t* skills, const int* correct,
                                      size_t length, double* out_state);

/* Trained predictor */
KTC_API ktc_status ktc_classifier_load(const char* path, ktc_classifier** out);
KTC_API void ktc_classifier_free(ktc_classifier* model);
KTC_API size_t ktc_classifier_num_features(const ktc_classifier* model);
/* rows x cols row-major matrix in; rows probabilities of class 1 out. */
KTC_API ktc_status ktc_classifier_predict_proba(const ktc_classifier* model, const double* x, size_t rows,
                                                size_t cols, double* out_probabilities);

/* Metrics */
KTC_API ktc_status ktc_auc(const double* scores, const int* labels, size_t n, double* out);
KTC_API ktc_status ktc_average_precision(const double* scores, const int* labels, size_t n, double* out);
KTC_API ktc_status ktc_rmse(const double* probabilities, const int* labels, size_t n, double* out);
KTC_API double ktc_combined_score(double auc, double rmse);

/* Statistics */
typedef struct ktc_t_test_result {
  double t_score;
  double p_value;
  double cohens_d;
  double df;
} ktc_t_test_result;

KTC_API ktc_status ktc_t_test(const double* a, size_t n_a, const double* b, size_t n_b, int welch,
                              ktc_t_test_result* out);
KTC_API ktc_status ktc_one_tailed_mean_test(const double* a, size_t n_a, const double* b, size_t n_b, int welch,
                                            double* out_p);
/* states: steps x skills row-major. */
KTC_API ktc_status ktc_nlg(const double* states, size_t steps, size_t skills, size_t window, double* out);

#ifdef __cplusplus
}
#endif

#endif
