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

// Command-line front end over the C interface: run, synth, eval.

#include "gypsum/gypsum.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

namespace {

// Exit codes: 0 ok, 1 config, 2 I/O, 3 numerical. Bad arguments count as config errors.
int exit_code(gypsum_status s) { return s == GYPSUM_ERR_INVALID_ARGUMENT ? 1 : static_cast<int>(s); }

int report(gypsum_status s) {
    if (s != GYPSUM_OK) std::fprintf(stderr, "gypsum: error: %s\n", gypsum_last_error());
    return exit_code(s);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir) {
    gypsum_config* cfg = nullptr;
    gypsum_status s = gypsum_config_load(config_path.c_str(), &cfg);
    if (s != GYPSUM_OK) return report(s);
    if (seed) gypsum_config_set_seed(cfg, *seed);
    if (!out_dir.empty()) s = gypsum_config_set_output_dir(cfg, out_dir.c_str());
    gypsum_run* run = nullptr;
    if (s == GYPSUM_OK) s = gypsum_run_pipeline(cfg, &run);
    gypsum_config_free(cfg);
    if (s != GYPSUM_OK) return report(s);

    size_t d = 0, k = 0, final_k = 0;
    gypsum_run_dims(run, &d, &k, &final_k);
    std::printf("d=%zu k=%zu final_k=%zu\n", d, k, final_k);
    for (const char* name : {"f1", "nmi", "ari", "baseline_f1", "baseline_nmi", "baseline_ari"}) {
        double v = 0.0;
        if (gypsum_run_score(run, name, &v) == GYPSUM_OK) std::printf("%s=%.4f\n", name, v);
    }
    gypsum_run_free(run);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised hyperspectral clustering: autoencoder embedding + Gaussian mixture"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(gypsum_version()));

    auto* run = app.add_subcommand("run", "Run the clustering pipeline from a config file");
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    run->add_option("--config", config_path, "Config JSON (or a manifest from an earlier run)")->required();
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--out", out_dir, "Output directory (overrides output.dir)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic scene with ground truth");
    gypsum_synth_params params;
    gypsum_synth_default_params(&params);
    std::string synth_dir, layout = "voronoi";
    double snr = params.snr_db;
    synth->add_option("--out", synth_dir, "Output directory")->required();
    synth->add_option("--rows", params.rows, "Raster rows")->capture_default_str();
    synth->add_option("--cols", params.cols, "Raster columns")->capture_default_str();
    synth->add_option("--bands", params.bands, "Spectral bands")->capture_default_str();
    synth->add_option("--endmembers", params.endmembers, "Number of endmembers")->capture_default_str();
    synth->add_option("--wl-lo", params.wl_lo, "First band centre (nm)")->capture_default_str();
    synth->add_option("--wl-hi", params.wl_hi, "Last band centre (nm)")->capture_default_str();
    synth->add_option("--snr", snr, "Signal-to-noise ratio in dB; 'inf' for noiseless")->capture_default_str();
    synth->add_option("--purity", params.min_purity, "Lower bound of the dominant abundance")->capture_default_str();
    synth->add_option("--gain-jitter", params.column_gain_jitter, "Per-column gain jitter (std dev)")->capture_default_str();
    synth->add_option("--layout", layout, "Region layout")->check(CLI::IsMember({"voronoi", "blocks"}))->capture_default_str();
    synth->add_option("--seed", params.seed, "Random seed")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "Score a saved cluster map");
    std::string pred, truth, eval_config, eval_out;
    eval->add_option("--pred", pred, "Cluster map header written by 'run'")->required();
    eval->add_option("--truth", truth, "Ground-truth label raster header");
    eval->add_option("--config", eval_config, "Run config; enables spectral-space CH/DB");
    eval->add_option("--out", eval_out, "Metrics JSON to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*run) return cmd_run(config_path, seed, out_dir);
    if (*synth) {
        params.snr_db = snr;
        params.layout = layout == "voronoi" ? 0 : 1;
        const gypsum_status s = gypsum_synth_write(&params, synth_dir.c_str());
        if (s == GYPSUM_OK) std::printf("wrote %s\n", synth_dir.c_str());
        return report(s);
    }
    const gypsum_status s = gypsum_eval_rasters(pred.c_str(), truth.empty() ? nullptr : truth.c_str(),
                                                eval_config.empty() ? nullptr : eval_config.c_str(), eval_out.c_str());
    if (s == GYPSUM_OK) std::printf("wrote %s\n", eval_out.c_str());
    return report(s);
}
