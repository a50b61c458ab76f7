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

#include "gypsum/pipeline.hpp"

#include "gypsum/cluster.hpp"
#include "gypsum/error.hpp"
#include "gypsum/map_io.hpp"
#include "gypsum/metrics.hpp"
#include "gypsum/subspace.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace gypsum {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config parsing --------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw_config(where + " must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || item.key() == a;
        if (!known) throw_config("unknown key '" + item.key() + "' in " + where);
    }
}

bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

std::size_t as_count(const json& v, const std::string& name) {
    if (!is_count(v)) throw_config(name + " must be a non-negative integer");
    return v.get<std::size_t>();
}

double as_number(const json& v, const std::string& name) {
    if (!v.is_number()) throw_config(name + " must be a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& name) {
    if (!v.is_boolean()) throw_config(name + " must be true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& name) {
    if (!v.is_string()) throw_config(name + " must be a string");
    return v.get<std::string>();
}

std::pair<double, double> as_range(const json& v, const std::string& name) {
    if (!v.is_array() || v.size() != 2) throw_config(name + " must be a two-element array");
    return {as_number(v[0], name), as_number(v[1], name)};
}

std::optional<std::size_t> optional_count(const json& obj, const char* key, const std::string& name) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    return as_count(obj[key], name);
}

json path_or_null(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

template <class T>
json optional_or_null(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

// ---- output directory handling --------------------------------------------

constexpr const char* kLockName = ".gypsum.lock";
constexpr const char* kStagingName = ".staging";
constexpr const char* kArtifactNames[] = {
    "cluster_map.png",          "cluster_map.hdr",          "cluster_map.img",          "cluster_means.csv",
    "baseline_cluster_map.png", "baseline_cluster_map.hdr", "baseline_cluster_map.img", "baseline_cluster_means.csv",
    "metrics.json",             "manifest.json",            "timings.json",             "model.gae"};

// Owns the output directory for one run: a lockfile against concurrent runs
// and a staging area that is only moved into place once every stage succeeded.
class OutputGuard {
public:
    explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        existed_ = fs::exists(dir_, ec);
        if (existed_ && !fs::is_directory(dir_)) throw_io("output path is not a directory: " + dir_.string());
        fs::create_directories(dir_, ec);
        if (ec) throw_io("cannot create output directory " + dir_.string() + ": " + ec.message());
        const fs::path lock = dir_ / kLockName;
        std::FILE* f = std::fopen(lock.c_str(), "wx");
        if (!f) {
            if (!existed_) fs::remove_all(dir_, ec);
            throw_io("output directory " + dir_.string() + " is locked by another run (" + lock.string() + ")");
        }
        std::fclose(f);
        staging_ = dir_ / kStagingName;
        fs::remove_all(staging_, ec);
        fs::create_directory(staging_, ec);
        if (ec) {
            release();
            throw_io("cannot create staging directory " + staging_.string() + ": " + ec.message());
        }
    }

    OutputGuard(const OutputGuard&) = delete;
    OutputGuard& operator=(const OutputGuard&) = delete;

    ~OutputGuard() { release(); }

    const fs::path& staging() const { return staging_; }

    // Artifacts a previous run may have left that this run did not produce are removed,
    // so the directory always describes a single run.
    void commit() {
        std::error_code ec;
        for (const char* name : kArtifactNames)
            if (!fs::exists(staging_ / name)) fs::remove(dir_ / name, ec);
        for (const auto& entry : fs::directory_iterator(staging_)) {
            fs::rename(entry.path(), dir_ / entry.path().filename(), ec);
            if (ec) throw_io("cannot move " + entry.path().string() + " into place: " + ec.message());
        }
        committed_ = true;
    }

private:
    void release() noexcept {
        std::error_code ec;
        fs::remove_all(staging_, ec);
        fs::remove(dir_ / kLockName, ec);
        if (!committed_ && !existed_) fs::remove_all(dir_, ec);
    }

    fs::path dir_;
    fs::path staging_;
    bool existed_ = false;
    bool committed_ = false;
};

void write_json(const json& doc, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw_io("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw_config("invalid JSON in " + path.string() + ": " + e.what());
    }
}

// ---- stage bookkeeping ----------------------------------------------------

class StageRunner {
public:
    template <class Fn>
    void operator()(const char* stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const Error& e) {
            // Bad inputs keep their category; anything else that escapes a stage is a numerical failure.
            const ErrorKind kind = e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Io ? e.kind() : ErrorKind::Numerical;
            throw Error(kind, std::string(stage) + ": " + e.what());
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Numerical, std::string(stage) + ": " + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timings_[stage] = secs;
        total_ += secs;
    }

    json timings() const { return json{{"schema_version", kSchemaVersion}, {"stages_seconds", timings_}, {"total_seconds", total_}}; }

private:
    json timings_ = json::object();
    double total_ = 0.0;
};

json report_json(const MetricsReport& r) {
    json out{{"space", r.space}, {"clusters", r.k}, {"points", r.points}};
    out["calinski_harabasz"] = r.ch ? json_number(*r.ch) : json(nullptr);
    out["davies_bouldin"] = r.db ? json_number(*r.db) : json(nullptr);
    return out;
}

json supervised_json(const MetricsReport& r) {
    return json{{"f1", r.f1 ? json_number(*r.f1) : json(nullptr)},
                {"nmi", r.nmi ? json_number(*r.nmi) : json(nullptr)},
                {"ari", r.ari ? json_number(*r.ari) : json(nullptr)},
                {"labelled_points", r.labelled_points}};
}

json merge_json(const MergeResult& m, double lambda) {
    json steps = json::array();
    for (const auto& s : m.trace) steps.push_back({{"kept", s.kept}, {"absorbed", s.absorbed}, {"angle", s.angle}});
    return json{{"enabled", true}, {"lambda", lambda}, {"merges", steps}, {"final_k", m.map.k}};
}

void require_dims(std::size_t rows, std::size_t cols, const HsiCube& cube, const std::string& what) {
    if (rows != cube.rows() || cols != cube.cols())
        throw_config(what + " is " + std::to_string(rows) + "x" + std::to_string(cols) + " but the cube is " +
                     std::to_string(cube.rows()) + "x" + std::to_string(cube.cols()));
}

std::vector<std::int32_t> truth_per_row(const LabelRaster& truth, const PixelMatrix& m) {
    std::vector<std::int32_t> out(m.pixels());
    for (std::size_t i = 0; i < m.pixels(); ++i) out[i] = truth.at(m.origin[i].row, m.origin[i].col);
    return out;
}

void write_map_set(ClusterMap& map, const PixelMatrix& matrix, const fs::path& dir, const std::string& stem,
                   std::vector<std::string>& written) {
    write_cluster_map_png(map, dir / (stem + "_map.png"));
    write_cluster_map_envi(map, dir / (stem + "_map.hdr"), dir / (stem + "_map.img"));
    write_cluster_means_csv(map, matrix.grid, dir / (stem + "_means.csv"));
    for (const char* suffix : {"_map.png", "_map.hdr", "_map.img", "_means.csv"}) written.push_back(stem + suffix);
}

}  // namespace

json json_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
    return v;
}

void RunConfig::validate() const {
    preprocess.validate();
    if (input.cube.empty()) throw_config("input.cube is required");
    if (d && *d == 0) throw_config("d must be at least 1");
    if (k && *k == 0) throw_config("k must be at least 1");
    if (postprocess.enabled && !postprocess.lambda)
        throw_config("postprocess.lambda is required when postprocess is enabled");
    if (postprocess.lambda && !(*postprocess.lambda >= 0.0 && *postprocess.lambda <= std::numbers::pi))
        throw_config("postprocess.lambda must lie in [0, pi] radians");
    if (baseline.n_components == 0) throw_config("baseline.n_components must be at least 1");
    if (baseline.k && *baseline.k == 0) throw_config("baseline.k must be at least 1");
    const AeConfig& ae = autoencoder;
    if (ae.hidden[0] == 0 || ae.hidden[1] == 0) throw_config("autoencoder.hidden sizes must be positive");
    if (!(ae.learning_rate > 0.0)) throw_config("autoencoder.learning_rate must be positive");
    if (ae.batch_size == 0) throw_config("autoencoder.batch_size must be at least 1");
    if (ae.max_epochs == 0) throw_config("autoencoder.max_epochs must be at least 1");
    if (!(ae.beta1 >= 0.0 && ae.beta1 < 1.0) || !(ae.beta2 >= 0.0 && ae.beta2 < 1.0))
        throw_config("autoencoder betas must lie in [0, 1)");
    if (!(ae.epsilon > 0.0)) throw_config("autoencoder.epsilon must be positive");
    if (!(ae.min_rel_improvement >= 0.0)) throw_config("autoencoder.min_rel_improvement must be non-negative");
}

RunConfig parse_run_config(const json& doc_in, const fs::path& base_dir) {
    const json& doc = doc_in.is_object() && doc_in.contains("schema_version") && doc_in.contains("config")
                          ? doc_in["config"]
                          : doc_in;
    check_keys(doc, {"input", "preprocess", "autoencoder", "d", "k", "postprocess", "baseline", "output", "seed"}, "config");
    auto resolve = [&](const json& v, const std::string& name) {
        fs::path p(as_string(v, name));
        if (p.is_relative()) p = base_dir / p;
        return fs::absolute(p).lexically_normal();
    };
    auto optional_path = [&](const json& obj, const char* key, const std::string& name) -> std::optional<fs::path> {
        if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
        return resolve(obj[key], name);
    };

    RunConfig c;
    if (!doc.contains("input")) throw_config("config needs an 'input' section");
    const json& in = doc["input"];
    check_keys(in, {"cube", "data", "wavelengths", "mask", "labels", "reference_map"}, "input");
    if (!in.contains("cube")) throw_config("input.cube is required");
    c.input.cube = resolve(in["cube"], "input.cube");
    c.input.data = optional_path(in, "data", "input.data");
    c.input.wavelengths = optional_path(in, "wavelengths", "input.wavelengths");
    c.input.mask = optional_path(in, "mask", "input.mask");
    c.input.labels = optional_path(in, "labels", "input.labels");
    c.input.reference_map = optional_path(in, "reference_map", "input.reference_map");

    if (doc.contains("preprocess")) {
        const json& p = doc["preprocess"];
        check_keys(p, {"workflow", "clip", "wavelength_range", "continuum_removal", "ratio_rois"}, "preprocess");
        Workflow wf = Workflow::Lab;
        if (p.contains("workflow")) {
            const auto name = as_string(p["workflow"], "preprocess.workflow");
            if (name == "lab") wf = Workflow::Lab;
            else if (name == "orbital") wf = Workflow::Orbital;
            else throw_config("preprocess.workflow must be 'lab' or 'orbital', got '" + name + "'");
        }
        c.preprocess = PreprocessConfig::for_workflow(wf);
        if (p.contains("clip")) std::tie(c.preprocess.clip_lo, c.preprocess.clip_hi) = as_range(p["clip"], "preprocess.clip");
        if (p.contains("wavelength_range"))
            std::tie(c.preprocess.wl_min, c.preprocess.wl_max) = as_range(p["wavelength_range"], "preprocess.wavelength_range");
        if (p.contains("continuum_removal"))
            c.preprocess.continuum_removal = as_bool(p["continuum_removal"], "preprocess.continuum_removal");
        if (p.contains("ratio_rois")) {
            if (!p["ratio_rois"].is_array()) throw_config("preprocess.ratio_rois must be an array");
            for (const auto& r : p["ratio_rois"]) {
                check_keys(r, {"row", "col", "rows", "cols"}, "preprocess.ratio_rois entry");
                for (const char* key : {"row", "col", "rows", "cols"})
                    if (!r.contains(key)) throw_config(std::string("ratio ROI needs '") + key + "'");
                c.preprocess.ratio_rois.push_back({as_count(r["row"], "roi.row"), as_count(r["col"], "roi.col"),
                                                   as_count(r["rows"], "roi.rows"), as_count(r["cols"], "roi.cols")});
            }
        }
    }

    if (doc.contains("autoencoder")) {
        const json& a = doc["autoencoder"];
        check_keys(a, {"hidden", "learning_rate", "batch_size", "max_epochs", "patience", "min_rel_improvement", "beta1",
                       "beta2", "epsilon"},
                   "autoencoder");
        AeConfig& ae = c.autoencoder;
        if (a.contains("hidden")) {
            if (!a["hidden"].is_array() || a["hidden"].size() != 2)
                throw_config("autoencoder.hidden must list two layer widths");
            ae.hidden = {as_count(a["hidden"][0], "autoencoder.hidden"), as_count(a["hidden"][1], "autoencoder.hidden")};
        }
        if (a.contains("learning_rate")) ae.learning_rate = as_number(a["learning_rate"], "autoencoder.learning_rate");
        if (a.contains("batch_size")) ae.batch_size = as_count(a["batch_size"], "autoencoder.batch_size");
        if (a.contains("max_epochs")) ae.max_epochs = as_count(a["max_epochs"], "autoencoder.max_epochs");
        if (a.contains("patience")) ae.patience = as_count(a["patience"], "autoencoder.patience");
        if (a.contains("min_rel_improvement"))
            ae.min_rel_improvement = as_number(a["min_rel_improvement"], "autoencoder.min_rel_improvement");
        if (a.contains("beta1")) ae.beta1 = as_number(a["beta1"], "autoencoder.beta1");
        if (a.contains("beta2")) ae.beta2 = as_number(a["beta2"], "autoencoder.beta2");
        if (a.contains("epsilon")) ae.epsilon = as_number(a["epsilon"], "autoencoder.epsilon");
    }

    c.d = optional_count(doc, "d", "d");
    c.k = optional_count(doc, "k", "k");

    if (doc.contains("postprocess")) {
        const json& p = doc["postprocess"];
        check_keys(p, {"enabled", "lambda"}, "postprocess");
        if (p.contains("enabled")) c.postprocess.enabled = as_bool(p["enabled"], "postprocess.enabled");
        if (p.contains("lambda") && !p["lambda"].is_null()) c.postprocess.lambda = as_number(p["lambda"], "postprocess.lambda");
    }

    if (doc.contains("baseline")) {
        const json& b = doc["baseline"];
        check_keys(b, {"method", "n_components", "k"}, "baseline");
        if (b.contains("method")) {
            const auto name = as_string(b["method"], "baseline.method");
            if (name == "none") c.baseline.method = BaselineMethod::None;
            else if (name == "pca_kmeans") c.baseline.method = BaselineMethod::PcaKmeans;
            else throw_config("baseline.method must be 'none' or 'pca_kmeans', got '" + name + "'");
        }
        if (b.contains("n_components")) c.baseline.n_components = as_count(b["n_components"], "baseline.n_components");
        c.baseline.k = optional_count(b, "k", "baseline.k");
    }

    if (doc.contains("output")) {
        const json& o = doc["output"];
        check_keys(o, {"dir", "save_model"}, "output");
        if (o.contains("dir") && !o["dir"].is_null()) c.output_dir = resolve(o["dir"], "output.dir");
        if (o.contains("save_model")) c.save_model = as_bool(o["save_model"], "output.save_model");
    }

    if (doc.contains("seed")) {
        if (!is_count(doc["seed"])) throw_config("seed must be a non-negative integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    const json doc = read_json(path);
    return parse_run_config(doc, fs::absolute(path).parent_path());
}

json config_to_json(const RunConfig& c) {
    json rois = json::array();
    for (const auto& r : c.preprocess.ratio_rois) rois.push_back({{"row", r.row}, {"col", r.col}, {"rows", r.rows}, {"cols", r.cols}});
    const AeConfig& ae = c.autoencoder;
    return json{
        {"input",
         {{"cube", c.input.cube.string()},
          {"data", path_or_null(c.input.data)},
          {"wavelengths", path_or_null(c.input.wavelengths)},
          {"mask", path_or_null(c.input.mask)},
          {"labels", path_or_null(c.input.labels)},
          {"reference_map", path_or_null(c.input.reference_map)}}},
        {"preprocess",
         {{"workflow", c.preprocess.workflow == Workflow::Lab ? "lab" : "orbital"},
          {"clip", {c.preprocess.clip_lo, c.preprocess.clip_hi}},
          {"wavelength_range", {c.preprocess.wl_min, c.preprocess.wl_max}},
          {"continuum_removal", c.preprocess.continuum_removal},
          {"ratio_rois", rois}}},
        {"autoencoder",
         {{"hidden", {ae.hidden[0], ae.hidden[1]}},
          {"learning_rate", ae.learning_rate},
          {"batch_size", ae.batch_size},
          {"max_epochs", ae.max_epochs},
          {"patience", ae.patience},
          {"min_rel_improvement", ae.min_rel_improvement},
          {"beta1", ae.beta1},
          {"beta2", ae.beta2},
          {"epsilon", ae.epsilon}}},
        {"d", optional_or_null(c.d)},
        {"k", optional_or_null(c.k)},
        {"postprocess", {{"enabled", c.postprocess.enabled}, {"lambda", optional_or_null(c.postprocess.lambda)}}},
        {"baseline",
         {{"method", c.baseline.method == BaselineMethod::None ? "none" : "pca_kmeans"},
          {"n_components", c.baseline.n_components},
          {"k", optional_or_null(c.baseline.k)}}},
        {"output", {{"save_model", c.save_model}}},
        {"seed", c.seed},
    };
}

RunSummary run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.output_dir.empty()) throw_config("no output directory given");
    OutputGuard guard(cfg.output_dir);
    const fs::path& stage_dir = guard.staging();
    StageRunner stage;

    HsiCube cube;
    std::optional<PixelMask> mask;
    std::optional<LabelRaster> truth;
    std::optional<ClusterMap> reference;
    stage("ingest", [&] {
        cube = read_envi(cfg.input.cube, cfg.input.data, cfg.input.wavelengths);
        if (cfg.input.mask) {
            mask = read_mask(*cfg.input.mask);
            require_dims(mask->rows(), mask->cols(), cube, "mask");
        }
        if (cfg.input.labels) {
            truth = read_label_raster(*cfg.input.labels);
            require_dims(truth->rows, truth->cols, cube, "label raster");
        }
        if (cfg.input.reference_map) {
            reference = read_cluster_map(*cfg.input.reference_map);
            require_dims(reference->rows, reference->cols, cube, "reference map");
        }
    });

    PreprocessResult pre;
    stage("preprocess", [&] { pre = preprocess(cube, cfg.preprocess, mask ? &*mask : nullptr); });
    const PixelMatrix& matrix = pre.matrix;
    const std::size_t w = matrix.bands(), p = matrix.pixels();

    RunSummary summary;
    std::optional<SubspaceResult> subspace;
    std::optional<NoiseEstimate> noise;
    stage("subspace", [&] {
        if (cfg.d) {
            if (*cfg.d >= w)
                throw_config("d = " + std::to_string(*cfg.d) + " must be below the " + std::to_string(w) +
                             " bands left after preprocessing");
            summary.d = *cfg.d;
        } else {
            noise = estimate_noise(matrix);
            subspace = estimate_dimension(matrix, *noise);
            summary.d = subspace->d;
        }
        summary.k = cluster_count(summary.d, cfg.k);
        if (summary.k > p)
            throw_config("k = " + std::to_string(summary.k) + " exceeds the " + std::to_string(p) + " retained pixels");
    });

    TrainResult trained;
    Embedding embedding;
    stage("autoencoder", [&] {
        AeConfig ae = cfg.autoencoder;
        ae.input_dim = w;
        ae.embed_dim = summary.d;
        ae.seed = cfg.seed;
        ae.validate();
        trained = train(matrix.spectra, ae);
        embedding = encode_all(trained.model, matrix);
    });

    GmmModel gmm;
    ClusterMap gmm_map;
    std::vector<std::int32_t> gmm_labels;
    stage("cluster", [&] {
        gmm = gmm_fit(embedding.values, summary.k, cfg.seed);
        gmm_labels = gmm_assign(gmm, embedding.values);
        gmm_map = make_cluster_map(matrix, gmm_labels, summary.k);
    });

    ClusterMap final_map;
    json merge_record{{"enabled", false}};
    stage("postprocess", [&] {
        if (cfg.postprocess.enabled) {
            MergeResult merged = merge_clusters(gmm_map, matrix, *cfg.postprocess.lambda);
            merge_record = merge_json(merged, *cfg.postprocess.lambda);
            final_map = std::move(merged.map);
        } else {
            final_map = gmm_map;
        }
        if (reference) final_map.palette = match_palette(final_map, *reference);
        summary.final_k = final_map.k;
    });
    const auto final_labels = pixel_labels(final_map, matrix);
    const auto truth_rows = truth ? std::optional(truth_per_row(*truth, matrix)) : std::nullopt;
    auto truth_span = [&]() -> std::optional<std::span<const std::int32_t>> {
        if (!truth_rows) return std::nullopt;
        return std::span<const std::int32_t>(*truth_rows);
    };

    json baseline_record = nullptr;
    json baseline_metrics = nullptr;
    std::optional<ClusterMap> baseline_map;
    stage("baseline", [&] {
        if (cfg.baseline.method == BaselineMethod::None) return;
        const std::size_t nc = cfg.baseline.n_components;
        if (nc > w || nc > p)
            throw_config("baseline.n_components = " + std::to_string(nc) + " exceeds the data dimensions");
        const std::size_t kb = cfg.baseline.k.value_or(summary.k);
        if (kb > p) throw_config("baseline.k exceeds the number of retained pixels");
        const PcaResult proj = pca(matrix.spectra, nc);
        const KMeansResult km = kmeans_fit(proj.projected, kb, cfg.seed);
        ClusterMap map = make_cluster_map(matrix, km.labels, kb);
        json merge_info{{"enabled", false}};
        if (cfg.postprocess.enabled) {
            MergeResult merged = merge_clusters(map, matrix, *cfg.postprocess.lambda);
            merge_info = merge_json(merged, *cfg.postprocess.lambda);
            map = std::move(merged.map);
        }
        map.palette = match_palette(map, reference ? *reference : final_map);
        const auto labels = pixel_labels(map, matrix);
        const auto emb_rep = evaluate(proj.projected, labels, std::nullopt, "pca");
        const auto spec_rep = evaluate(matrix.spectra, labels, truth_span(), "spectral");
        baseline_metrics = json{{"clusters", kb}, {"final_clusters", map.k}, {"embedding", report_json(emb_rep)},
                                {"spectral", report_json(spec_rep)}};
        if (truth) baseline_metrics["supervised"] = supervised_json(spec_rep);
        baseline_record = json{{"method", "pca_kmeans"},  {"n_components", nc},
                               {"k", kb},                  {"kmeans_iterations", km.iterations},
                               {"explained_variance", std::vector<double>(proj.explained_variance.data(),
                                                                          proj.explained_variance.data() + proj.explained_variance.size())},
                               {"postprocess", merge_info}};
        baseline_map = std::move(map);
    });

    std::vector<std::string> written;
    stage("output", [&] {
        const auto emb_rep = evaluate(embedding.values, final_labels, std::nullopt, "embedding");
        const auto spec_rep = evaluate(matrix.spectra, final_labels, truth_span(), "spectral");
        json gypsum{{"clusters", summary.k},
                    {"final_clusters", final_map.k},
                    {"embedding", report_json(emb_rep)},
                    {"spectral", report_json(spec_rep)}};
        if (truth) {
            gypsum["supervised"] = supervised_json(spec_rep);
            if (cfg.postprocess.enabled) {
                const auto unmerged = evaluate(matrix.spectra, gmm_labels, truth_span(), "spectral");
                gypsum["supervised_before_merge"] = supervised_json(unmerged);
            }
        }
        json notes = json::array();
        for (const auto& n : spec_rep.notes) notes.push_back(n);
        notes.push_back("embedding-space scores are not comparable across methods; spectral-space scores are");
        summary.metrics = json{{"schema_version", kSchemaVersion}, {"gypsum", gypsum}, {"notes", notes}};
        if (!baseline_metrics.is_null()) summary.metrics["baseline"] = baseline_metrics;

        write_map_set(final_map, matrix, stage_dir, "cluster", written);
        if (baseline_map) write_map_set(*baseline_map, matrix, stage_dir, "baseline_cluster", written);
        write_json(summary.metrics, stage_dir / "metrics.json");
        written.push_back("metrics.json");
        if (cfg.save_model) {
            save_model(trained.model, stage_dir / "model.gae");
            written.push_back("model.gae");
        }

        json hysime = nullptr;
        if (subspace) {
            hysime = json{{"eigenvalues", subspace->eigenvalues},
                          {"delta", subspace->per_direction_cost},
                          {"noise_variance", std::vector<double>(noise->variance.data(), noise->variance.data() + noise->variance.size())}};
        }
        std::vector<std::size_t> layers{w, cfg.autoencoder.hidden[0], cfg.autoencoder.hidden[1], summary.d,
                                        cfg.autoencoder.hidden[1], cfg.autoencoder.hidden[0], w};
        written.push_back("manifest.json");
        written.push_back("timings.json");
        summary.manifest = json{
            {"schema_version", kSchemaVersion},
            {"tool", "gypsum"},
            {"version", kVersion},
            {"config", config_to_json(cfg)},
            {"seed", cfg.seed},
            {"input", {{"rows", cube.rows()}, {"cols", cube.cols()}, {"bands", cube.bands()}}},
            {"preprocess",
             {{"bands", w},
              {"wavelength_min", matrix.grid[0]},
              {"wavelength_max", matrix.grid[w - 1]},
              {"pixels", p},
              {"nonfinite_pixels", pre.nonfinite_pixels},
              {"zero_norm_pixels", pre.zero_norm_pixels},
              {"user_masked_pixels", pre.user_masked_pixels},
              {"continuum_rejected_pixels", pre.continuum_rejected_pixels}}},
            {"d", summary.d},
            {"d_source", cfg.d ? "override" : "hysime"},
            {"k", summary.k},
            {"k_rule", cfg.k ? "override" : "2d"},
            {"hysime", hysime},
            {"autoencoder",
             {{"layers", layers},
              {"epochs", trained.epoch_loss.size()},
              {"best_epoch", trained.best_epoch},
              {"best_loss", trained.epoch_loss[trained.best_epoch]},
              {"epoch_loss", trained.epoch_loss}}},
            {"gmm",
             {{"k", gmm.k()},
              {"iterations", gmm.iterations},
              {"converged", gmm.converged},
              {"reseed_iterations", gmm.reseed_iterations},
              {"reg_covar", gmm.reg_covar},
              {"mean_log_likelihood", gmm.log_likelihood_trace.empty() ? json(nullptr) : json_number(gmm.log_likelihood_trace.back())}}},
            {"postprocess", merge_record},
            {"final_k", final_map.k},
            {"baseline", baseline_record},
            {"outputs", written},
        };
        write_json(summary.manifest, stage_dir / "manifest.json");
    });
    summary.timings = stage.timings();
    write_json(summary.timings, stage_dir / "timings.json");
    guard.commit();
    return summary;
}

json evaluate_rasters(const fs::path& pred_header, const std::optional<fs::path>& truth_header,
                      const std::optional<RunConfig>& config) {
    const ClusterMap pred = read_cluster_map(pred_header);
    json out{{"schema_version", kSchemaVersion}, {"prediction", fs::absolute(pred_header).lexically_normal().string()},
             {"clusters", pred.k}};
    if (truth_header) {
        const LabelRaster truth = read_label_raster(*truth_header);
        if (truth.rows != pred.rows || truth.cols != pred.cols) throw_config("truth raster dimensions differ from the prediction");
        std::vector<std::int32_t> a, b;
        for (std::size_t i = 0; i < pred.labels.size(); ++i)
            if (pred.labels[i] >= 0 && truth.labels[i] > 0) {
                a.push_back(pred.labels[i]);
                b.push_back(truth.labels[i]);
            }
        if (a.empty()) {
            out["supervised"] = nullptr;
        } else {
            out["supervised"] = json{{"f1", json_number(f1_matched(a, b))},
                                     {"nmi", json_number(nmi(a, b))},
                                     {"ari", json_number(ari(a, b))},
                                     {"labelled_points", a.size()}};
        }
        out["truth"] = fs::absolute(*truth_header).lexically_normal().string();
    }
    if (config) {
        const HsiCube cube = read_envi(config->input.cube, config->input.data, config->input.wavelengths);
        require_dims(pred.rows, pred.cols, cube, "prediction");
        std::optional<PixelMask> mask;
        if (config->input.mask) mask = read_mask(*config->input.mask);
        const auto pre = preprocess(cube, config->preprocess, mask ? &*mask : nullptr);
        const auto labels = pixel_labels(pred, pre.matrix);
        out["spectral"] = report_json(evaluate(pre.matrix.spectra, labels, std::nullopt, "spectral"));
    }
    out["notes"] = json::array({"F1: optimal one-to-one cluster/class matching (overlap ties go to the higher summed F1), macro-averaged over classes",
                                "NMI: mutual information over the arithmetic mean of entropies",
                                "DB uses the mean member-to-centroid distance as cluster spread"});
    return out;
}

json write_synth_fixture(const SynthSpec& spec, const fs::path& dir) {
    const SynthScene scene = generate(spec);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());
    write_envi(scene.cube, dir / "cube.hdr", dir / "cube.img", Interleave::Bsq, 4);
    write_label_raster(scene.labels, dir / "labels.hdr", dir / "labels.img");
    {
        std::ofstream csv(dir / "endmembers.csv");
        if (!csv) throw_io("cannot write " + (dir / "endmembers.csv").string());
        csv << "endmember";
        for (std::size_t b = 0; b < scene.cube.bands(); ++b) csv << ",nm_" << std::setprecision(10) << scene.cube.grid()[b];
        csv << '\n' << std::setprecision(17);
        for (Eigen::Index e = 0; e < scene.endmembers.rows(); ++e) {
            csv << e + 1;
            for (Eigen::Index b = 0; b < scene.endmembers.cols(); ++b) csv << ',' << scene.endmembers(e, b);
            csv << '\n';
        }
    }
    json info{{"schema_version", kSchemaVersion},
              {"rows", spec.rows},
              {"cols", spec.cols},
              {"bands", spec.bands},
              {"wavelength_range", {spec.wl_lo, spec.wl_hi}},
              {"endmembers", spec.endmembers},
              {"layout", spec.layout == Layout::Voronoi ? "voronoi" : "blocks"},
              {"min_purity", spec.min_purity},
              {"snr_db", json_number(spec.snr_db)},
              {"column_gain_jitter", spec.column_gain_jitter},
              {"seed", spec.seed},
              {"noise_sigma", scene.noise_sigma},
              {"signal_power", scene.signal_power}};
    write_json(info, dir / "scene.json");
    // Synthetic scenes are linear mixtures, so the ready-made config skips
    // continuum removal to keep the subspace estimate on linear data.
    json config{{"input", {{"cube", "cube.hdr"}, {"labels", "labels.hdr"}}},
                {"preprocess", {{"workflow", "lab"}, {"continuum_removal", false}}},
                {"postprocess", {{"enabled", true}, {"lambda", 0.05}}},
                {"baseline", {{"method", "pca_kmeans"}, {"n_components", 20}}},
                {"seed", spec.seed}};
    write_json(config, dir / "config.json");
    return info;
}

}  // namespace gypsum
