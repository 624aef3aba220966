/* SPDX-License-Identifier: Apache-2.0
 * Copyright 2026 The momentloc Authors
 *
 * C interface to the momentloc library. Every fallible call returns an
 * mloc_status; on failure mloc_last_error() describes the problem for the
 * calling thread. Strings returned through char** are owned by the caller and
 * released with mloc_string_free. Handles are released with their _free call;
 * passing NULL to a _free call is a no-op.
 */
#ifndef MOMENTLOC_MOMENTLOC_H
#define MOMENTLOC_MOMENTLOC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MLOC_API __declspec(dllexport)
#else
#define MLOC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mloc_status {
  MLOC_OK = 0,
  MLOC_ERR_DOMAIN = 1,   /* argument outside the operation's domain */
  MLOC_ERR_NUMERIC = 2,  /* NaN or infinity during computation */
  MLOC_ERR_FORMAT = 3,   /* malformed file or record */
  MLOC_ERR_IO = 4,       /* file could not be opened, read or written */
  MLOC_ERR_USAGE = 5,    /* bad option, key or mode name */
  MLOC_ERR_MISMATCH = 6, /* checkpoint or prediction does not match */
  MLOC_ERR_INTERNAL = 7
} mloc_status;

MLOC_API const char* mloc_version(void);
/* Message for the most recent failure on this thread; "" if none. */
MLOC_API const char* mloc_last_error(void);
MLOC_API void mloc_string_free(char* s);

/* ---- feature sequences ------------------------------------------------ */

typedef struct mloc_features mloc_features;

MLOC_API mloc_status mloc_features_read(const char* path, mloc_features** out);
MLOC_API mloc_status mloc_features_write(const mloc_features* f, const char* path);
/* Copies n*d row-major values. frame_count is the source frame count l. */
MLOC_API mloc_status mloc_features_create(const double* data, int64_t n, int64_t d, double fps,
                                          int64_t frame_count, mloc_features** out);
MLOC_API int64_t mloc_features_length(const mloc_features* f);
MLOC_API int64_t mloc_features_width(const mloc_features* f);
MLOC_API double mloc_features_fps(const mloc_features* f);
MLOC_API int64_t mloc_features_frame_count(const mloc_features* f);
/* Copies the matrix into out, which must hold length*width values. */
MLOC_API mloc_status mloc_features_copy_data(const mloc_features* f, double* out, size_t capacity);
MLOC_API void mloc_features_free(mloc_features* f);

/* Applies one sampler (training-phase draw for stochastic modes). The sidecar
 * is a JSON object listing each bucket's source range and chosen index
 * (null for pooled modes). */
MLOC_API mloc_status mloc_sample(const mloc_features* in, const char* mode, int64_t buckets,
                                 uint64_t seed, mloc_features** out, char** sidecar_json);

/* ---- run configuration ------------------------------------------------ */

typedef struct mloc_config mloc_config;

MLOC_API mloc_status mloc_config_new(mloc_config** out);
MLOC_API mloc_status mloc_config_load(const char* path, mloc_config** out);
MLOC_API mloc_status mloc_config_set(mloc_config* cfg, const char* key, const char* value);
MLOC_API mloc_status mloc_config_get(const mloc_config* cfg, const char* key, char** value);
/* Every key with its current value and a help comment, in file syntax. */
MLOC_API mloc_status mloc_config_dump(const mloc_config* cfg, char** text);
MLOC_API mloc_status mloc_config_validate(const mloc_config* cfg);
MLOC_API void mloc_config_free(mloc_config* cfg);

/* ---- pipeline ----------------------------------------------------------- */

/* Per-epoch progress callback. */
typedef void (*mloc_epoch_fn)(void* user, int64_t epoch, double loss_kl, double loss_att,
                              double loss_se, double loss_total, double miou);

/* Trains on the configured data and writes the checkpoint and the metric
 * CSV. Either path may be NULL to skip that output. */
MLOC_API mloc_status mloc_train(const mloc_config* cfg, const char* checkpoint_path,
                                const char* metrics_path, mloc_epoch_fn on_epoch, void* user);

/* Writes a synthetic split (features/ and a manifest) under dir. split 1 is
 * the training stream, 2 the evaluation stream. */
MLOC_API mloc_status mloc_generate(const mloc_config* cfg, const char* dir, const char* manifest_name,
                                   uint64_t split, int64_t count, char** manifest_path);

typedef struct mloc_eval_result {
  size_t n_alphas;
  double alphas[8];
  double recalls[8];
  double miou;
  int64_t examples;
} mloc_eval_result;

/* Evaluates a checkpoint. manifest NULL uses the configured evaluation data.
 * With cfg non-NULL the checkpoint's model fields must match it
 * (MLOC_ERR_MISMATCH names the first differing field). predictions_path may
 * be NULL. */
MLOC_API mloc_status mloc_eval(const char* checkpoint_path, const mloc_config* cfg, const char* manifest,
                               const double* alphas, size_t n_alphas, const char* predictions_path,
                               mloc_eval_result* result);

/* Scores an existing predictions file against a manifest. */
MLOC_API mloc_status mloc_eval_predictions(const char* predictions_path, const char* manifest,
                                           const double* alphas, size_t n_alphas,
                                           mloc_eval_result* result);

/* Writes the memory benchmark CSV; modes is a comma-separated list. */
MLOC_API mloc_status mloc_bench_mem(const mloc_config* cfg, const double* durations, size_t n_durations,
                                    const char* modes, const char* csv_path);

/* Trains one model per (mode, seed) and writes the seed-mean table, sorted
 * by mIoU descending, to table_path (NULL: only *table). */
MLOC_API mloc_status mloc_compare_samplers(const mloc_config* cfg, const char* modes, const uint64_t* seeds,
                                           size_t n_seeds, const char* table_path, char** table);

#ifdef __cplusplus
}
#endif

#endif /* MOMENTLOC_MOMENTLOC_H */
