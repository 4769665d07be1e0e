#ifndef SDM_SDM_H
#define SDM_SDM_H

/* C interface to the supervised descent library. Every function returns an
 * sdm_status; on failure sdm_last_error() describes the problem (the string
 * is thread-local and valid until the next call on the same thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SDM_BUILDING_LIBRARY)
#define SDM_API __declspec(dllexport)
#else
#define SDM_API __declspec(dllimport)
#endif
#else
#define SDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sdm_status {
  SDM_OK = 0,
  SDM_ERR_INVALID_ARGUMENT = 1,
  SDM_ERR_CONTRACT = 2,
  SDM_ERR_DIVERGED = 3,
  SDM_ERR_RANK_DEFICIENT = 4,
  SDM_ERR_DEGENERATE_NEIGHBORHOOD = 5,
  SDM_ERR_PRECONDITION = 6,
  SDM_ERR_INVALID_EPSILON = 7,
  SDM_ERR_INVALID_PROJECTION = 8,
  SDM_ERR_NUMERICAL = 9,
  SDM_ERR_IO = 10,
  SDM_ERR_PARSE = 11,
  SDM_ERR_CALLBACK = 12,
  SDM_ERR_INTERNAL = 13
} sdm_status;

typedef enum sdm_mode {
  SDM_MODE_TEMPLATE = 0,
  SDM_MODE_REVERSED = 1,
  SDM_MODE_GENERALIZED = 2
} sdm_mode;

SDM_API const char* sdm_version(void);
SDM_API const char* sdm_status_string(sdm_status status);
SDM_API const char* sdm_last_error(void);

/* Evaluates h(x) into out[0..m). Return 0 on success, nonzero to abort. */
typedef int (*sdm_map_fn)(const double* x, size_t p, double* out, size_t m, void* user);

/* ---- descent sequences ---- */

typedef struct sdm_sequence sdm_sequence;

/* gains: stages * p * m values, each gain row-major; biases: stages * p
 * values or NULL for zero biases. */
SDM_API sdm_status sdm_sequence_create(sdm_mode mode, size_t p, size_t m, size_t stages,
                                       const double* gains, const double* biases,
                                       sdm_sequence** out);
SDM_API sdm_status sdm_sequence_load(const char* path, sdm_sequence** out);
SDM_API sdm_status sdm_sequence_save(const sdm_sequence* seq, const char* path);
SDM_API void sdm_sequence_free(sdm_sequence* seq);
SDM_API sdm_status sdm_sequence_dims(const sdm_sequence* seq, size_t* p, size_t* m,
                                     size_t* stages);
SDM_API sdm_status sdm_sequence_mode(const sdm_sequence* seq, sdm_mode* mode);
/* Copies min(capacity, stages + 1) loss values; *count receives the total. */
SDM_API sdm_status sdm_sequence_training_report(const sdm_sequence* seq, double* out,
                                                size_t capacity, size_t* count);
/* Runs every stage from x0. y (length m) is ignored in generalized mode and
 * may be NULL there. trajectory, if not NULL, receives (stages + 1) * p
 * values. */
SDM_API sdm_status sdm_sequence_apply(const sdm_sequence* seq, const double* x0, sdm_map_fn map,
                                      void* user, const double* y, double* x_out,
                                      double* trajectory);

/* Reversed-mode model for a registry function: "linear", "cube", "exp", "erf". */
SDM_API sdm_status sdm_train_analytic(const char* function, size_t stages, sdm_sequence** out);
/* Reversed-mode pose model on the standard training grid. model is a
 * built-in name ("cube", "body", "face") or a point file path. */
SDM_API sdm_status sdm_train_pose(const char* model, size_t stages, double noise_variance,
                                  uint64_t seed, sdm_sequence** out);
/* pixels: u1 v1 u2 v2 ... for `points` model points. pose_out receives
 * yaw, pitch, roll (radians), tx, ty, tz (mm). */
SDM_API sdm_status sdm_estimate_pose(const sdm_sequence* seq, const char* model,
                                     const double* pixels, size_t points, double* pose_out);

/* ---- online refresh ---- */

typedef struct sdm_online sdm_online;

/* Seeds every stage's inverse covariance with I / ridge. */
SDM_API sdm_status sdm_online_create(const sdm_sequence* seq, double ridge, double forgetting,
                                     double weight, sdm_online** out);
SDM_API sdm_status sdm_online_ingest(sdm_online* state, const double* x_opt, const double* x0,
                                     sdm_map_fn map, void* user);
SDM_API sdm_status sdm_online_to_sequence(const sdm_online* state, sdm_sequence** out);
SDM_API sdm_status sdm_online_max_asymmetry(const sdm_online* state, double* out);
SDM_API sdm_status sdm_online_ingested(const sdm_online* state, size_t* out);
SDM_API sdm_status sdm_online_save(const sdm_online* state, const char* path);
SDM_API sdm_status sdm_online_load(const char* path, sdm_online** out);
SDM_API void sdm_online_free(sdm_online* state);

/* ---- experiment runs ---- */

typedef struct sdm_report sdm_report;

SDM_API const char* sdm_report_text(const sdm_report* report);
SDM_API int sdm_report_passed(const sdm_report* report);
SDM_API size_t sdm_report_failure_count(const sdm_report* report);
SDM_API const char* sdm_report_failure(const sdm_report* report, size_t index);
SDM_API size_t sdm_report_file_count(const sdm_report* report);
SDM_API const char* sdm_report_file(const sdm_report* report, size_t index);
SDM_API void sdm_report_free(sdm_report* report);

/* Unset doubles are NaN; unset strings are NULL. */
typedef struct sdm_analytic_options {
  const char* function; /* NULL runs the whole registry */
  size_t stages;
  const char* output_dir;
} sdm_analytic_options;

typedef struct sdm_pose_options {
  const char* models; /* comma-separated built-in names; NULL for all */
  const char* model_file;
  size_t stages;
  double ridge;
  double noise_variance;
  int train_noise;
  int test_noise;
  size_t subsample; /* 0 evaluates the full test grid */
  uint64_t seed;
  const char* output_dir;
} sdm_pose_options;

typedef struct sdm_verify_options {
  uint64_t seed;
  double epsilon;
  double radius;
  int grid_per_dim;
  const char* output_dir;
} sdm_verify_options;

typedef struct sdm_online_demo_options {
  uint64_t seed;
  double forgetting;
  double weight;
  double ridge;
  const char* output_dir;
} sdm_online_demo_options;

typedef struct sdm_train_options {
  const char* problem; /* "analytic:<function>" or "pose:<model>" */
  size_t stages;       /* 0 picks the problem default */
  double ridge;
  double noise_variance;
  uint64_t seed;
  const char* model_path;
} sdm_train_options;

typedef struct sdm_apply_options {
  const char* model_path;
  const char* input_path; /* NULL uses the built-in test set */
  size_t subsample;
  double noise_variance;
  uint64_t seed;
  const char* output_dir;
} sdm_apply_options;

SDM_API void sdm_analytic_options_init(sdm_analytic_options* options);
SDM_API void sdm_pose_options_init(sdm_pose_options* options);
SDM_API void sdm_verify_options_init(sdm_verify_options* options);
SDM_API void sdm_online_demo_options_init(sdm_online_demo_options* options);
SDM_API void sdm_train_options_init(sdm_train_options* options);
SDM_API void sdm_apply_options_init(sdm_apply_options* options);

/* On SDM_OK *report is set; a run whose checks fail still returns SDM_OK
 * with sdm_report_passed() == 0. */
SDM_API sdm_status sdm_run_analytic(const sdm_analytic_options* options, sdm_report** report);
SDM_API sdm_status sdm_run_pose(const sdm_pose_options* options, sdm_report** report);
SDM_API sdm_status sdm_run_verify(const sdm_verify_options* options, sdm_report** report);
SDM_API sdm_status sdm_run_online_demo(const sdm_online_demo_options* options,
                                       sdm_report** report);
SDM_API sdm_status sdm_run_train(const sdm_train_options* options, sdm_report** report);
SDM_API sdm_status sdm_run_apply(const sdm_apply_options* options, sdm_report** report);

#ifdef __cplusplus
}
#endif

#endif
