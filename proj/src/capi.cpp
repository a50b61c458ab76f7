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

#include "gypsum/gypsum.h"

#include "gypsum/error.hpp"
#include "gypsum/metrics.hpp"
#include "gypsum/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <new>
#include <string>

struct gypsum_config {
    gypsum::RunConfig config;
};

struct gypsum_run {
    gypsum::RunSummary summary;
};

namespace {

thread_local std::string last_error;

gypsum_status fail(gypsum_status status, const std::string& message) {
    last_error = message;
    return status;
}

// Runs fn, translating exceptions into status codes.
template <class Fn>
gypsum_status guarded(Fn&& fn) {
    try {
        fn();
        last_error.clear();
        return GYPSUM_OK;
    } catch (const gypsum::Error& e) {
        return fail(static_cast<gypsum_status>(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(GYPSUM_ERR_NUMERICAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(GYPSUM_ERR_NUMERICAL, e.what());
    }
}

std::span<const std::int32_t> labels_of(const int32_t* p, size_t n) { return {p, n}; }

gypsum::RowMatrix points_of(const double* p, size_t n, size_t dim) {
    return Eigen::Map<const gypsum::RowMatrix>(p, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
}

}  // namespace

extern "C" {

const char* gypsum_version(void) { return gypsum::kVersion; }

const char* gypsum_last_error(void) { return last_error.c_str(); }

gypsum_status gypsum_config_load(const char* path, gypsum_config** out) {
    if (!path || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new gypsum_config{gypsum::load_run_config(path)}; });
}

gypsum_status gypsum_config_parse(const char* json_text, const char* base_dir, gypsum_config** out) {
    if (!json_text || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::parse_error& e) {
            gypsum::throw_config(std::string("invalid JSON: ") + e.what());
        }
        const std::filesystem::path base = base_dir ? std::filesystem::path(base_dir) : std::filesystem::current_path();
        *out = new gypsum_config{gypsum::parse_run_config(doc, base)};
    });
}

gypsum_status gypsum_config_set_seed(gypsum_config* config, uint64_t seed) {
    if (!config) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null config");
    config->config.seed = seed;
    return GYPSUM_OK;
}

gypsum_status gypsum_config_set_output_dir(gypsum_config* config, const char* dir) {
    if (!config || !dir) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { config->config.output_dir = std::filesystem::absolute(dir).lexically_normal(); });
}

gypsum_status gypsum_config_to_json(const gypsum_config* config, char* buf, size_t size, size_t* needed) {
    if (!config) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null config");
    return guarded([&] {
        const std::string text = gypsum::config_to_json(config->config).dump(2);
        if (needed) *needed = text.size() + 1;
        if (buf && size > 0) {
            const size_t n = std::min(size - 1, text.size());
            std::memcpy(buf, text.data(), n);
            buf[n] = '\0';
        }
    });
}

void gypsum_config_free(gypsum_config* config) { delete config; }

gypsum_status gypsum_run_pipeline(const gypsum_config* config, gypsum_run** out) {
    if (!config || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new gypsum_run{gypsum::run_pipeline(config->config)}; });
}

gypsum_status gypsum_run_dims(const gypsum_run* run, size_t* d, size_t* k, size_t* final_k) {
    if (!run) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null run");
    if (d) *d = run->summary.d;
    if (k) *k = run->summary.k;
    if (final_k) *final_k = run->summary.final_k;
    return GYPSUM_OK;
}

gypsum_status gypsum_run_score(const gypsum_run* run, const char* name, double* out) {
    if (!run || !name || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    std::string key = name;
    std::string section = "gypsum";
    if (key.rfind("baseline_", 0) == 0) {
        section = "baseline";
        key = key.substr(9);
    }
    const auto& m = run->summary.metrics;
    if (!m.contains(section) || !m[section].contains("supervised") || !m[section]["supervised"].contains(key))
        return fail(GYPSUM_ERR_INVALID_ARGUMENT, std::string("score not available: ") + name);
    const auto& v = m[section]["supervised"][key];
    if (!v.is_number()) return fail(GYPSUM_ERR_INVALID_ARGUMENT, std::string("score not available: ") + name);
    *out = v.get<double>();
    return GYPSUM_OK;
}

void gypsum_run_free(gypsum_run* run) { delete run; }

void gypsum_synth_default_params(gypsum_synth_params* params) {
    if (!params) return;
    const gypsum::SynthSpec spec;
    params->rows = spec.rows;
    params->cols = spec.cols;
    params->bands = spec.bands;
    params->endmembers = spec.endmembers;
    params->wl_lo = spec.wl_lo;
    params->wl_hi = spec.wl_hi;
    params->snr_db = spec.snr_db;
    params->min_purity = spec.min_purity;
    params->column_gain_jitter = spec.column_gain_jitter;
    params->layout = spec.layout == gypsum::Layout::Voronoi ? 0 : 1;
    params->seed = spec.seed;
}

gypsum_status gypsum_synth_write(const gypsum_synth_params* params, const char* dir) {
    if (!params || !dir) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    if (params->layout != 0 && params->layout != 1) return fail(GYPSUM_ERR_CONFIG, "layout must be 0 (voronoi) or 1 (blocks)");
    return guarded([&] {
        gypsum::SynthSpec spec;
        spec.rows = params->rows;
        spec.cols = params->cols;
        spec.bands = params->bands;
        spec.endmembers = params->endmembers;
        spec.wl_lo = params->wl_lo;
        spec.wl_hi = params->wl_hi;
        spec.snr_db = params->snr_db;
        spec.min_purity = params->min_purity;
        spec.column_gain_jitter = params->column_gain_jitter;
        spec.layout = params->layout == 0 ? gypsum::Layout::Voronoi : gypsum::Layout::Blocks;
        spec.seed = params->seed;
        try {
            spec.validate();
        } catch (const gypsum::Error& e) {
            gypsum::throw_config(e.what());
        }
        gypsum::write_synth_fixture(spec, dir);
    });
}

gypsum_status gypsum_eval_rasters(const char* pred_header, const char* truth_header, const char* config_path,
                                  const char* out_json) {
    if (!pred_header || !out_json) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        std::optional<std::filesystem::path> truth;
        if (truth_header) truth = truth_header;
        std::optional<gypsum::RunConfig> config;
        if (config_path) config = gypsum::load_run_config(config_path);
        nlohmann::json report;
        try {
            report = gypsum::evaluate_rasters(pred_header, truth, config);
        } catch (const gypsum::Error& e) {
            if (e.kind() == gypsum::ErrorKind::InvalidArgument) throw gypsum::Error(gypsum::ErrorKind::Numerical, e.what());
            throw;
        }
        std::ofstream out(out_json);
        if (!out) gypsum::throw_io(std::string("cannot write ") + out_json);
        out << report.dump(2) << '\n';
        if (!out) gypsum::throw_io(std::string("write failed for ") + out_json);
    });
}

gypsum_status gypsum_ari(const int32_t* a, const int32_t* b, size_t n, double* out) {
    if (!a || !b || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::ari(labels_of(a, n), labels_of(b, n)); });
}

gypsum_status gypsum_nmi(const int32_t* a, const int32_t* b, size_t n, double* out) {
    if (!a || !b || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::nmi(labels_of(a, n), labels_of(b, n)); });
}

gypsum_status gypsum_f1_matched(const int32_t* pred, const int32_t* truth, size_t n, double* out) {
    if (!pred || !truth || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::f1_matched(labels_of(pred, n), labels_of(truth, n)); });
}

gypsum_status gypsum_calinski_harabasz(const double* points, size_t n, size_t dim, const int32_t* labels, double* out) {
    if (!points || !labels || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::calinski_harabasz(points_of(points, n, dim), labels_of(labels, n)); });
}

gypsum_status gypsum_davies_bouldin(const double* points, size_t n, size_t dim, const int32_t* labels, double* out) {
    if (!points || !labels || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::davies_bouldin(points_of(points, n, dim), labels_of(labels, n)); });
}

gypsum_status gypsum_spectral_angle(const double* a, const double* b, size_t n, double* out) {
    if (!a || !b || !out) return fail(GYPSUM_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = gypsum::spectral_angle(std::span<const double>(a, n), std::span<const double>(b, n)); });
}

}  // extern "C"
