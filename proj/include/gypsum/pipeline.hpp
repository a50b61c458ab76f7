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

// End-to-end orchestration: preprocess, subspace estimate, autoencoder,
// mixture clustering, optional merge, optional PCA + k-means baseline.

#pragma once

#include "gypsum/autoencoder.hpp"
#include "gypsum/preprocess.hpp"
#include "gypsum/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>

namespace gypsum {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct InputPaths {
    std::filesystem::path cube;  // ENVI header
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> wavelengths;
    std::optional<std::filesystem::path> mask;
    std::optional<std::filesystem::path> labels;
    std::optional<std::filesystem::path> reference_map;
};

struct PostprocessConfig {
    bool enabled = false;
    std::optional<double> lambda;  // radians, required when enabled
};

enum class BaselineMethod { None, PcaKmeans };

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::None;
    std::size_t n_components = 20;
    std::optional<std::size_t> k;  // defaults to the pipeline's k
};

struct RunConfig {
    InputPaths input;
    PreprocessConfig preprocess;
    AeConfig autoencoder;  // input_dim and embed_dim are filled in at run time
    std::optional<std::size_t> d;
    std::optional<std::size_t> k;
    PostprocessConfig postprocess;
    BaselineConfig baseline;
    std::filesystem::path output_dir;
    bool save_model = false;
    std::uint64_t seed = 0;

    /// Checks that need no data. Throws Config.
    void validate() const;
};

/// Relative paths resolve against `base_dir`. A manifest written by
/// run_pipeline is accepted too (its "config" section is used).
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Config echo as stored in the manifest: absolute paths, no output directory.
nlohmann::json config_to_json(const RunConfig& config);

struct RunSummary {
    std::size_t d = 0;
    std::size_t k = 0;
    std::size_t final_k = 0;
    nlohmann::json metrics;
    nlohmann::json manifest;
    nlohmann::json timings;
};

/// Runs every stage and writes artifacts into config.output_dir. Errors are
/// rethrown prefixed with the stage name; nothing from the failed run is left behind.
RunSummary run_pipeline(const RunConfig& config);

/// Scores a saved cluster map against a truth raster and, when `config` is
/// given, recomputes spectral-space CH/DB from its preprocessed cube.
nlohmann::json evaluate_rasters(const std::filesystem::path& pred_header,
                                const std::optional<std::filesystem::path>& truth_header,
                                const std::optional<RunConfig>& config);

/// Writes cube.hdr/img, labels.hdr/img, endmembers.csv, scene.json and a
/// ready-to-run config.json into `dir`.
nlohmann::json write_synth_fixture(const SynthSpec& spec, const std::filesystem::path& dir);

/// JSON number, or "+inf"/"-inf"/"nan" for non-finite values.
nlohmann::json json_number(double v);

}  // namespace gypsum
