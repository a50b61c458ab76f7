/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the gypsum clustering library. Every call returns a
 * gypsum_status; on failure gypsum_last_error() describes the cause for the
 * calling thread. Handles are opaque and owned by the caller. */

#ifndef GYPSUM_H
#define GYPSUM_H

#include <stddef.h>
#include <stdint.h>

#if defined(GYPSUM_BUILDING)
#define GYPSUM_API __attribute__((visibility("default")))
#else
#define GYPSUM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 1-3 double as process exit codes. */
typedef enum gypsum_status {
    GYPSUM_OK = 0,
    GYPSUM_ERR_CONFIG = 1,
    GYPSUM_ERR_IO = 2,
    GYPSUM_ERR_NUMERICAL = 3,
    GYPSUM_ERR_INVALID_ARGUMENT = 4
} gypsum_status;

typedef struct gypsum_config gypsum_config;
typedef struct gypsum_run gypsum_run;

GYPSUM_API const char* gypsum_version(void);
GYPSUM_API const char* gypsum_last_error(void);

/* Run configuration. A manifest from an earlier run is accepted as well. */
GYPSUM_API gypsum_status gypsum_config_load(const char* path, gypsum_config** out);
GYPSUM_API gypsum_status gypsum_config_parse(const char* json_text, const char* base_dir, gypsum_config** out);
GYPSUM_API gypsum_status gypsum_config_set_seed(gypsum_config* config, uint64_t seed);
GYPSUM_API gypsum_status gypsum_config_set_output_dir(gypsum_config* config, const char* dir);
/* Writes the config echo (as stored in manifests) into buf; *needed gets the size including NUL. */
GYPSUM_API gypsum_status gypsum_config_to_json(const gypsum_config* config, char* buf, size_t size, size_t* needed);
GYPSUM_API void gypsum_config_free(gypsum_config* config);

/* Runs the full pipeline and writes artifacts into the configured output directory. */
GYPSUM_API gypsum_status gypsum_run_pipeline(const gypsum_config* config, gypsum_run** out);
GYPSUM_API gypsum_status gypsum_run_dims(const gypsum_run* run, size_t* d, size_t* k, size_t* final_k);
/* name: "ari", "nmi", "f1", "baseline_ari", "baseline_nmi", "baseline_f1".
 * GYPSUM_ERR_INVALID_ARGUMENT when the score was not computed for this run. */
GYPSUM_API gypsum_status gypsum_run_score(const gypsum_run* run, const char* name, double* out);
GYPSUM_API void gypsum_run_free(gypsum_run* run);

typedef struct gypsum_synth_params {
    size_t rows;
    size_t cols;
    size_t bands;
    size_t endmembers;
    double wl_lo;
    double wl_hi;
    double snr_db; /* INFINITY for a noiseless scene */
    double min_purity;
    double column_gain_jitter;
    int layout; /* 0 voronoi, 1 blocks */
    uint64_t seed;
} gypsum_synth_params;

GYPSUM_API void gypsum_synth_default_params(gypsum_synth_params* params);
/* Writes cube, label raster, endmembers, scene description and a ready config into dir. */
GYPSUM_API gypsum_status gypsum_synth_write(const gypsum_synth_params* params, const char* dir);

/* Scores a saved cluster map; truth_header and config_path may be NULL. */
GYPSUM_API gypsum_status gypsum_eval_rasters(const char* pred_header, const char* truth_header, const char* config_path,
                                             const char* out_json);

GYPSUM_API gypsum_status gypsum_ari(const int32_t* a, const int32_t* b, size_t n, double* out);
GYPSUM_API gypsum_status gypsum_nmi(const int32_t* a, const int32_t* b, size_t n, double* out);
GYPSUM_API gypsum_status gypsum_f1_matched(const int32_t* pred, const int32_t* truth, size_t n, double* out);
/* points: n x dim row-major. */
GYPSUM_API gypsum_status gypsum_calinski_harabasz(const double* points, size_t n, size_t dim, const int32_t* labels,
                                                  double* out);
GYPSUM_API gypsum_status gypsum_davies_bouldin(const double* points, size_t n, size_t dim, const int32_t* labels,
                                               double* out);
GYPSUM_API gypsum_status gypsum_spectral_angle(const double* a, const double* b, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* GYPSUM_H */
