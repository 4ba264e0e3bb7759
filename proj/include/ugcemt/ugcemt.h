/* SPDX-License-Identifier: Apache-2.0
 *
 * C API for the UG-CEMT semi-supervised segmentation engine.
 *
 * All functions return ugc_status (UGC_OK on success); the most recent
 * error message for the calling thread is available via ugc_last_error().
 * Handles are opaque; every *_create has a matching *_destroy.
 */
#ifndef UGCEMT_UGCEMT_H
#define UGCEMT_UGCEMT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UGC_API __declspec(dllexport)
#else
#define UGC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ugc_status {
    UGC_OK = 0,
    UGC_ERR_CONFIG = 1,  /* invalid configuration value or combination */
    UGC_ERR_SHAPE = 2,   /* array dimensions disagree */
    UGC_ERR_DATA = 3,    /* missing or inconsistent dataset content */
    UGC_ERR_FORMAT = 4,  /* malformed file */
    UGC_ERR_NUMERIC = 5, /* non-finite values where finite ones are required */
    UGC_ERR_STATE = 6,   /* operation does not fit the current state */
    UGC_ERR_IO = 7,      /* filesystem failure */
    UGC_ERR_METRIC = 8,  /* metric undefined for the given masks */
    UGC_ERR_UNKNOWN = 9
} ugc_status;

UGC_API const char* ugc_version(void);
UGC_API const char* ugc_status_name(ugc_status s);
/* Message from the last failing call on this thread ("" if none). */
UGC_API const char* ugc_last_error(void);

/* ---- configuration ------------------------------------------------- */

typedef struct ugc_config ugc_config;

UGC_API ugc_config* ugc_config_create(void);
UGC_API void ugc_config_destroy(ugc_config* c);
/* File entries do not override keys that were already set (precedence:
 * explicit sets > file > built-in defaults). */
UGC_API ugc_status ugc_config_load_file(ugc_config* c, const char* path);
UGC_API ugc_status ugc_config_set(ugc_config* c, const char* key, const char* value);
UGC_API ugc_status ugc_config_get(const ugc_config* c, const char* key, char* buf,
                                  size_t buf_len);
/* Validates the full training configuration; UGC_ERR_CONFIG names the
 * violated invariant in ugc_last_error(). */
UGC_API ugc_status ugc_config_validate(const ugc_config* c);
UGC_API ugc_status ugc_config_write_file(const ugc_config* c, const char* path);

/* ---- commands ------------------------------------------------------ */

/* Writes a synthetic dataset (volumes, labels, manifest) into out_dir. */
UGC_API ugc_status ugc_generate_dataset(const ugc_config* c, const char* out_dir);

/* phase: 1, 2, or 0 for both. Reads data_dir from the config and writes
 * checkpoints/logs/UGM files under the config's out_dir. */
UGC_API ugc_status ugc_train(const ugc_config* c, int phase);

/* Evaluates a checkpoint on the test split; writes per-case + mean CSV. */
UGC_API ugc_status ugc_evaluate(const ugc_config* c, const char* checkpoint_path,
                                const char* out_csv);

/* Runs the Baseline / MT / CEMT / UG-CEMT study; writes ablation.csv plus
 * one run directory per row under out_dir. */
UGC_API ugc_status ugc_ablate(const ugc_config* c, const char* out_dir);

/* Renders loss curves from a losses.csv log. */
UGC_API ugc_status ugc_plot_losses(const char* losses_csv, const char* out_svg);

/* Renders the four metric panels (dice/jaccard/hd95/asd over steps) for two
 * runs side by side, e.g. consistency-regularization vs pseudo-labels. */
UGC_API ugc_status ugc_plot_metric_comparison(const char* metrics_csv_a, const char* label_a,
                                              const char* metrics_csv_b, const char* label_b,
                                              const char* out_svg);

/* ---- direct metric entry point ------------------------------------- */

/* Binary masks (nonzero = foreground), dims (nz, ny, nx), spacing in mm per
 * axis (z, y, x). out must hold 4 doubles: dice, jaccard, hd95, asd.
 * Returns UGC_ERR_METRIC when a surface metric is undefined (empty mask);
 * dice/jaccard are still written in that case and hd95/asd are NaN. */
UGC_API ugc_status ugc_metrics_binary(const uint8_t* pred, const uint8_t* gt, const int dims[3],
                                      const float spacing[3], double out[4]);

#ifdef __cplusplus
}
#endif

#endif /* UGCEMT_UGCEMT_H */
