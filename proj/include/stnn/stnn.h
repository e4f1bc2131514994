/* STNN - local spacetime traffic forecasting.
 *
 * C API over the forecasting core. Objects are opaque handles created and
 * released through these functions; every fallible call returns a status
 * code, with a thread-local message available from stnn_last_error().
 */
#ifndef STNN_STNN_H_
#define STNN_STNN_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stnn_status {
  STNN_OK = 0,
  STNN_ERROR_INVALID_ARGUMENT = 1,
  STNN_ERROR_DIMENSION = 2,
  STNN_ERROR_IO = 3,
  STNN_ERROR_PARSE = 4,
  STNN_ERROR_NOT_FOUND = 5,
  STNN_ERROR_STATE = 6,
  STNN_ERROR_NUMERIC = 7,
  STNN_ERROR_INTERNAL = 8
} stnn_status;

const char* stnn_version(void);
/* Message of the most recent failure on this thread; never NULL. */
const char* stnn_last_error(void);
const char* stnn_status_name(stnn_status status);

typedef struct stnn_dataset stnn_dataset;
typedef struct stnn_model stnn_model;

/* --- datasets ------------------------------------------------------------ */

stnn_status stnn_dataset_open(const char* manifest_path, stnn_dataset** out);
/* Writes <name>.manifest.json and the referenced tables into directory.
 * manifest_path_out may be NULL; otherwise it receives the manifest path. */
stnn_status stnn_dataset_save(const stnn_dataset* dataset, const char* directory,
                              char* manifest_path_out, size_t manifest_path_len);
void stnn_dataset_free(stnn_dataset* dataset);
stnn_status stnn_dataset_info(const stnn_dataset* dataset, int64_t* num_sensors,
                              int64_t* num_features, int64_t* num_steps);
stnn_status stnn_dataset_sensor_id(const stnn_dataset* dataset, int64_t index, char* buf,
                                   size_t buf_len);

/* --- simulation ----------------------------------------------------------- */

typedef struct stnn_sim_params {
  int32_t junction_rows;  /* 0 -> default 3 */
  int32_t junction_cols;  /* 0 -> default 9 (84 road segments) */
  int64_t steps;          /* 0 -> default 2000 */
  uint64_t seed;
  int32_t with_default_closures; /* central double closure + two seeded ones */
  const char* name;       /* dataset name; NULL -> "sim" */
} stnn_sim_params;

void stnn_sim_params_init(stnn_sim_params* params);
stnn_status stnn_simulate(const stnn_sim_params* params, stnn_dataset** out);

/* --- models ---------------------------------------------------------------- */

typedef struct stnn_model_config {
  int32_t module_count;
  int32_t channels[8];          /* first module_count entries used */
  int32_t input_proj_channels;
  int32_t kernel_size;
  double leaky_slope;
  double dropout_rate;
  int32_t alpha;
  int32_t history_steps;
  int32_t horizon_steps;
  int32_t features;
  double epsilon;
  int32_t use_attention;
  int32_t use_conv;
  int32_t use_spacetime_kernel;
  int32_t use_temporal_kernel;
  int32_t use_spatial_kernel;
  int32_t attention_scale;
  int32_t mask_dummy_events;
  int32_t head_target_row_only;
} stnn_model_config;

void stnn_model_config_init(stnn_model_config* config);
stnn_status stnn_model_create(const stnn_model_config* config, uint64_t seed, stnn_model** out);
stnn_status stnn_model_load(const char* checkpoint_path, stnn_model** out);
stnn_status stnn_model_save(const stnn_model* model, const char* checkpoint_path);
void stnn_model_free(stnn_model* model);
int64_t stnn_model_param_count(const stnn_model* model);
stnn_status stnn_model_get_config(const stnn_model* model, stnn_model_config* out);

/* --- training and evaluation ------------------------------------------------ */

typedef struct stnn_train_options {
  int64_t epochs;
  int64_t batch_size;
  double learning_rate;
  double subsample_ratio;   /* training split only */
  uint64_t seed;
  int32_t threads;          /* <= 0: SF_THREADS / hardware */
  int64_t val_window_stride;
  const char* targets;      /* comma-separated ids, or NULL/"all" */
  const char* log_path;     /* optional epoch log */
} stnn_train_options;

void stnn_train_options_init(stnn_train_options* options);
stnn_status stnn_train(stnn_model* model, const stnn_dataset* dataset,
                       const stnn_train_options* options);

typedef struct stnn_metrics {
  double mae;
  double rmse;
  double mape_pct;
  int64_t points;
} stnn_metrics;

typedef struct stnn_eval_options {
  const char* split;        /* "test" (default), "val", "train" or "all" */
  const char* targets;
  int32_t threads;
  int32_t with_baselines;   /* include ha and persistence in the report file */
  int64_t window_stride;
} stnn_eval_options;

void stnn_eval_options_init(stnn_eval_options* options);
/* report_path and overall_out may each be NULL. */
stnn_status stnn_evaluate(const stnn_model* model, const stnn_dataset* dataset,
                          const stnn_eval_options* options, const char* report_path,
                          stnn_metrics* overall_out);
/* method: "ha" or "persistence". Window sizes follow history/horizon. */
stnn_status stnn_baseline_metrics(const stnn_dataset* dataset, const char* method,
                                  const stnn_eval_options* options, int64_t history_steps,
                                  int64_t horizon_steps, stnn_metrics* overall_out);

/* --- forecasting ------------------------------------------------------------- */

/* Forecasts from the final history window of the dataset for each target and
 * writes a CSV (sensor_id,y1..yT). */
stnn_status stnn_predict(const stnn_model* model, const stnn_dataset* dataset,
                         const char* targets, const char* out_csv_path);
/* Single-target forecast for the window starting at window_start
 * (window_start < 0 selects the final window). out must hold horizon_steps. */
stnn_status stnn_predict_window(const stnn_model* model, const stnn_dataset* dataset,
                                const char* target_id, int64_t window_start, double* out,
                                int64_t out_len);
/* Attention map of the first module for one target: alpha rows (neighbor
 * order, target first) by history_steps columns, written as CSV. */
stnn_status stnn_explain(const stnn_model* model, const stnn_dataset* dataset,
                         const char* target_id, int64_t window_start, const char* out_csv_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* STNN_STNN_H_ */
