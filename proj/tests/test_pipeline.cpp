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

#include "gypsum/map_io.hpp"
#include "gypsum/error.hpp"
#include "gypsum/pipeline.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace gypsum;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec() {
    SynthSpec s;
    s.rows = 24;
    s.cols = 24;
    s.endmembers = 3;
    s.seed = 3;
    return s;
}

// A fixture directory plus its generated config with a short training schedule.
struct Fixture {
    test::TempDir dir{"pipeline"};
    RunConfig config;

    Fixture() {
        write_synth_fixture(small_spec(), dir.path());
        config = load_run_config(dir / "config.json");
        config.autoencoder.max_epochs = 15;
        config.autoencoder.batch_size = 64;
        config.baseline.n_components = 10;
        config.output_dir = dir / "out";
    }
};

json read(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::InvalidArgument;
}

json minimal_config() {
    return json{{"input", {{"cube", "cube.hdr"}}}, {"preprocess", {{"workflow", "lab"}}}, {"seed", 1}};
}

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = parse_run_config(minimal_config(), "/data");
    CHECK(cfg.input.cube == fs::path("/data/cube.hdr"));
    CHECK(cfg.seed == 1);
    CHECK_FALSE(cfg.postprocess.enabled);
    CHECK(cfg.baseline.method == BaselineMethod::None);

    auto bad = minimal_config();
    bad["colour"] = "blue";
    CHECK(kind_of([&] { parse_run_config(bad, "/"); }) == ErrorKind::Config);

    bad = minimal_config();
    bad["postprocess"] = {{"enabled", true}};
    CHECK(kind_of([&] { parse_run_config(bad, "/").validate(); }) == ErrorKind::Config);
    bad["postprocess"]["lambda"] = -0.1;
    CHECK(kind_of([&] { parse_run_config(bad, "/").validate(); }) == ErrorKind::Config);
    bad["postprocess"]["lambda"] = 0.05;
    CHECK_NOTHROW(parse_run_config(bad, "/").validate());

    bad = minimal_config();
    bad["preprocess"]["workflow"] = "orbital";
    CHECK(kind_of([&] { parse_run_config(bad, "/").validate(); }) == ErrorKind::Config);

    bad = minimal_config();
    bad["k"] = 0;
    CHECK(kind_of([&] { parse_run_config(bad, "/").validate(); }) == ErrorKind::Config);

    bad = minimal_config();
    bad["baseline"] = {{"method", "spectral"}};
    CHECK(kind_of([&] { parse_run_config(bad, "/"); }) == ErrorKind::Config);

    const auto echo = config_to_json(cfg);
    CHECK_FALSE(echo["output"].contains("dir"));
    const auto again = parse_run_config(echo, "/elsewhere");
    CHECK(config_to_json(again) == echo);
}

TEST_CASE("default run records the k = 2d rule and is reproducible") {
    Fixture fx;
    const auto summary = run_pipeline(fx.config);
    const auto out = fx.config.output_dir;
    const auto manifest = read(out / "manifest.json");
    CHECK(summary.k == 2 * summary.d);
    CHECK(manifest["k"] == 2 * manifest["d"].get<int>());
    CHECK(manifest["k_rule"] == "2d");
    CHECK(manifest["d_source"] == "hysime");
    CHECK(manifest["schema_version"] == kSchemaVersion);
    CHECK(manifest["hysime"]["delta"].size() == 46);  // bands left after the wavelength trim
    CHECK(manifest["postprocess"]["lambda"] == 0.05);
    for (const char* f : {"cluster_map.png", "cluster_map.hdr", "cluster_map.img", "cluster_means.csv", "metrics.json",
                          "manifest.json", "timings.json", "baseline_cluster_map.png", "baseline_cluster_map.hdr",
                          "baseline_cluster_means.csv"})
        CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK_FALSE(fs::exists(out / ".gypsum.lock"));
    CHECK_FALSE(fs::exists(out / ".staging"));

    const auto metrics = read(out / "metrics.json");
    CHECK(metrics["schema_version"] == kSchemaVersion);
    CHECK(metrics["gypsum"]["supervised"].contains("ari"));
    CHECK(metrics["baseline"]["supervised"].contains("ari"));
    CHECK(metrics["gypsum"]["embedding"]["space"] == "embedding");
    CHECK(metrics["gypsum"]["spectral"]["space"] == "spectral");
    const auto timings = read(out / "timings.json");
    for (const char* s : {"ingest", "preprocess", "subspace", "autoencoder", "cluster", "postprocess", "output"})
        CHECK_MESSAGE(timings["stages_seconds"].contains(s), s);

    const auto map = read_cluster_map(out / "cluster_map.hdr");
    CHECK(map.k == summary.final_k);

    // Same config and seed: byte-identical raster and manifest.
    auto second = fx.config;
    second.output_dir = fx.dir / "out2";
    run_pipeline(second);
    CHECK(slurp(out / "cluster_map.img") == slurp(second.output_dir / "cluster_map.img"));
    CHECK(slurp(out / "manifest.json") == slurp(second.output_dir / "manifest.json"));

    // The manifest alone replays the run.
    auto replay = load_run_config(out / "manifest.json");
    replay.output_dir = fx.dir / "out3";
    run_pipeline(replay);
    CHECK(slurp(out / "manifest.json") == slurp(replay.output_dir / "manifest.json"));
}

TEST_CASE("overrides of d and k are honoured") {
    Fixture fx;
    fx.config.d = 20;
    fx.config.k = 20;
    fx.config.postprocess.enabled = false;
    fx.config.baseline.method = BaselineMethod::PcaKmeans;
    fx.config.baseline.n_components = 20;
    fx.config.baseline.k = 52;
    const auto summary = run_pipeline(fx.config);
    CHECK(summary.d == 20);
    CHECK(summary.k == 20);
    const auto manifest = read(fx.config.output_dir / "manifest.json");
    CHECK(manifest["d"] == 20);
    CHECK(manifest["d_source"] == "override");
    CHECK(manifest["k"] == 20);
    CHECK(manifest["k_rule"] == "override");
    CHECK(manifest["autoencoder"]["layers"].back() == 46);
    CHECK(manifest["gmm"]["k"] == 20);
    CHECK(manifest["baseline"]["n_components"] == 20);
    CHECK(manifest["baseline"]["k"] == 52);
    CHECK(manifest["config"]["baseline"]["k"] == 52);
}

TEST_CASE("disabled baseline writes no baseline artifacts") {
    Fixture fx;
    run_pipeline(fx.config);
    CHECK(fs::exists(fx.config.output_dir / "baseline_cluster_map.png"));
    // Rerunning into the same directory without the baseline drops the old baseline files.
    std::ofstream(fx.config.output_dir / "notes.txt") << "mine";
    fx.config.baseline.method = BaselineMethod::None;
    run_pipeline(fx.config);
    CHECK(fs::exists(fx.config.output_dir / "notes.txt"));
    for (const auto& entry : fs::directory_iterator(fx.config.output_dir))
        CHECK(entry.path().filename().string().rfind("baseline", 0) == std::string::npos);
    const auto metrics = read(fx.config.output_dir / "metrics.json");
    CHECK_FALSE(metrics.contains("baseline"));
}

TEST_CASE("missing cube fails cleanly") {
    Fixture fx;
    fx.config.input.cube = fx.dir / "absent.hdr";
    try {
        run_pipeline(fx.config);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).rfind("ingest: ", 0) == 0);
    }
    CHECK_FALSE(fs::exists(fx.config.output_dir));
}

TEST_CASE("stage failures leave an existing output directory as it was") {
    Fixture fx;
    fs::create_directories(fx.config.output_dir);
    std::ofstream(fx.config.output_dir / "keep.txt") << "x";
    fx.config.baseline.n_components = 500;
    CHECK(kind_of([&] { run_pipeline(fx.config); }) == ErrorKind::Config);
    std::vector<std::string> left;
    for (const auto& entry : fs::directory_iterator(fx.config.output_dir)) left.push_back(entry.path().filename());
    CHECK(left == std::vector<std::string>{"keep.txt"});
}

TEST_CASE("a locked output directory is refused") {
    Fixture fx;
    fs::create_directories(fx.config.output_dir);
    std::ofstream(fx.config.output_dir / ".gypsum.lock") << "";
    CHECK(kind_of([&] { run_pipeline(fx.config); }) == ErrorKind::Io);
    CHECK(fs::exists(fx.config.output_dir / ".gypsum.lock"));
}

TEST_CASE("rasters can be scored after the fact") {
    Fixture fx;
    const auto summary = run_pipeline(fx.config);
    const auto report =
        evaluate_rasters(fx.config.output_dir / "cluster_map.hdr", fx.dir / "labels.hdr", fx.config);
    CHECK(report["supervised"]["ari"].get<double>() ==
          doctest::Approx(summary.metrics["gypsum"]["supervised"]["ari"].get<double>()).epsilon(1e-12));
    CHECK(report["spectral"].contains("calinski_harabasz"));
    CHECK(kind_of([&] { evaluate_rasters(fx.dir / "nope.hdr", std::nullopt, std::nullopt); }) == ErrorKind::Io);
}

TEST_CASE("non-finite numbers are written as strings") {
    CHECK(json_number(INFINITY) == "+inf");
    CHECK(json_number(-INFINITY) == "-inf");
    CHECK(json_number(NAN) == "nan");
    CHECK(json_number(1.5) == 1.5);
}
