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

#include "gypsum/synth.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gypsum {

namespace {

double angle_between(const std::vector<double>& a, const std::vector<double>& b) { return spectral_angle(a, b); }

std::vector<double> feature_profile(const EndmemberSpec& spec, const WavelengthGrid& grid) {
    std::vector<double> out(grid.size(), 1.0);
    for (std::size_t j = 0; j < grid.size(); ++j)
        for (const auto& f : spec.features) {
            const double z = (grid[j] - f.center_nm) / f.width_nm;
            out[j] *= 1.0 - f.depth * std::exp(-0.5 * z * z);
        }
    return out;
}

// Rejection-sample endmembers whose absorption signatures are mutually
// distinct and whose stacked spectra are well conditioned.
std::vector<EndmemberSpec> draw_endmembers(const SynthSpec& spec, const WavelengthGrid& grid, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> level(0.35, 0.6), slope(-0.12, 0.12), center(1100.0, 2500.0),
        width(25.0, 90.0), depth(0.25, 0.65);
    std::uniform_int_distribution<int> nfeat(2, 3);
    constexpr double kMinProfileAngle = 0.12;
    constexpr double kMinConditioning = 0.02;

    for (int restart = 0; restart < 200; ++restart) {
        std::vector<EndmemberSpec> accepted;
        std::vector<std::vector<double>> profiles;
        for (int attempt = 0; attempt < 2000 && accepted.size() < spec.endmembers; ++attempt) {
            EndmemberSpec e;
            e.continuum_level = level(rng);
            e.continuum_slope = slope(rng);
            const int n = nfeat(rng);
            for (int f = 0; f < n; ++f) e.features.push_back({center(rng), width(rng), depth(rng)});
            auto prof = feature_profile(e, grid);
            bool distinct = true;
            for (const auto& other : profiles)
                if (angle_between(prof, other) < kMinProfileAngle) distinct = false;
            if (!distinct) continue;
            accepted.push_back(std::move(e));
            profiles.push_back(std::move(prof));
        }
        if (accepted.size() < spec.endmembers) continue;

        RowMatrix m(static_cast<Eigen::Index>(spec.endmembers), static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < accepted.size(); ++i) {
            auto s = endmember_spectrum(accepted[i], grid);
            const double n = l2_norm(s);
            for (std::size_t j = 0; j < s.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j] / n;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) / sv(0) >= kMinConditioning) return accepted;
    }
    throw_numerical("synth: could not draw sufficiently distinct endmembers");
}

std::vector<std::size_t> region_layout(const SynthSpec& spec, std::mt19937_64& rng) {
    const std::size_t n = spec.rows * spec.cols;
    const std::size_t r = spec.endmembers;
    std::vector<std::size_t> region(n, 0);
    if (spec.layout == Layout::Blocks) {
        const std::size_t gc = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(r))));
        const std::size_t gr = (r + gc - 1) / gc;
        for (std::size_t y = 0; y < spec.rows; ++y)
            for (std::size_t x = 0; x < spec.cols; ++x) {
                const std::size_t ty = y * gr / spec.rows, tx = x * gc / spec.cols;
                region[y * spec.cols + x] = (ty * gc + tx) % r;
            }
        return region;
    }

    std::uniform_real_distribution<double> ry(0.0, static_cast<double>(spec.rows)),
        rx(0.0, static_cast<double>(spec.cols));
    const std::size_t min_size = std::max<std::size_t>(1, n / (4 * r));
    for (int attempt = 0;; ++attempt) {
        std::vector<std::pair<double, double>> sites(r);
        for (auto& s : sites) s = {ry(rng), rx(rng)};
        std::vector<std::size_t> sizes(r, 0);
        for (std::size_t y = 0; y < spec.rows; ++y)
            for (std::size_t x = 0; x < spec.cols; ++x) {
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < r; ++k) {
                    const double dy = static_cast<double>(y) + 0.5 - sites[k].first;
                    const double dx = static_cast<double>(x) + 0.5 - sites[k].second;
                    const double d = dy * dy + dx * dx;
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                region[y * spec.cols + x] = best;
                ++sizes[best];
            }
        if (*std::min_element(sizes.begin(), sizes.end()) >= min_size || attempt >= 100) return region;
    }
}

}  // namespace

void SynthSpec::validate() const {
    if (rows == 0 || cols == 0 || bands < 2) throw_invalid("synth: raster needs rows, cols > 0 and >= 2 bands");
    if (endmembers == 0 || endmembers > 10) throw_invalid("synth: endmember count must be in 1..10");
    if (!(wl_lo < wl_hi)) throw_invalid("synth: wl_lo must be below wl_hi");
    if (!(min_purity >= 0.0 && min_purity <= 1.0)) throw_invalid("synth: min_purity must be in [0, 1]");
    if (std::isnan(snr_db)) throw_invalid("synth: snr_db is NaN");
    if (column_gain_jitter < 0.0 || column_gain_jitter >= 1.0) throw_invalid("synth: column_gain_jitter in [0, 1)");
    if (!endmember_specs.empty() && endmember_specs.size() != endmembers)
        throw_invalid("synth: endmember_specs must list one entry per endmember");
    for (const auto& e : endmember_specs)
        for (const auto& f : e.features)
            if (!(f.depth > 0.0 && f.depth < 1.0) || !(f.width_nm > 0.0))
                throw_invalid("synth: feature depth must be in (0, 1) and width positive");
}

std::vector<double> endmember_spectrum(const EndmemberSpec& spec, const WavelengthGrid& grid) {
    std::vector<double> out = feature_profile(spec, grid);
    if (grid.empty()) return out;
    const double lo = grid[0], hi = grid[grid.size() - 1];
    const double mid = 0.5 * (lo + hi), span = hi > lo ? hi - lo : 1.0;
    for (std::size_t j = 0; j < grid.size(); ++j)
        out[j] *= spec.continuum_level + spec.continuum_slope * (grid[j] - mid) / span;
    return out;
}

SynthScene generate(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const WavelengthGrid grid = WavelengthGrid::linspace(spec.wl_lo, spec.wl_hi, spec.bands);
    const std::size_t r = spec.endmembers, w = spec.bands, n = spec.rows * spec.cols;

    const auto em_specs = spec.endmember_specs.empty() ? draw_endmembers(spec, grid, rng) : spec.endmember_specs;
    SynthScene scene;
    scene.endmembers.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(w));
    for (std::size_t i = 0; i < r; ++i) {
        const auto s = endmember_spectrum(em_specs[i], grid);
        for (std::size_t j = 0; j < w; ++j) scene.endmembers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j];
    }

    const auto region = region_layout(spec, rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    scene.abundances = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const std::size_t dom = region[i];
        const double purity = spec.min_purity + (1.0 - spec.min_purity) * unit(rng);
        if (r == 1) {
            scene.abundances(row, 0) = 1.0;
            continue;
        }
        std::vector<double> rest(r, 0.0);
        double total = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
            if (k == dom) continue;
            rest[k] = -std::log(1.0 - unit(rng));  // Dirichlet(1) via exponentials
            total += rest[k];
        }
        for (std::size_t k = 0; k < r; ++k)
            scene.abundances(row, static_cast<Eigen::Index>(k)) =
                k == dom ? purity : (total > 0.0 ? (1.0 - purity) * rest[k] / total : 0.0);
    }

    std::vector<double> gain(spec.cols, 1.0);
    if (spec.column_gain_jitter > 0.0)
        for (double& g : gain) g = 1.0 + spec.column_gain_jitter * (2.0 * unit(rng) - 1.0);

    const RowMatrix clean = scene.abundances * scene.endmembers;
    std::vector<double> data(n * w);
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double v = clean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * gain[i % spec.cols];
            data[i * w + j] = v;
            power += v * v;
        }
    scene.signal_power = power / static_cast<double>(n * w);
    scene.noise_sigma = std::isinf(spec.snr_db) ? 0.0 : std::sqrt(scene.signal_power / std::pow(10.0, spec.snr_db / 10.0));
    if (scene.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, scene.noise_sigma);
        for (double& v : data) v += noise(rng);
    }
    scene.cube = HsiCube(spec.rows, spec.cols, grid, std::move(data));

    scene.labels.rows = spec.rows;
    scene.labels.cols = spec.cols;
    scene.labels.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        scene.abundances.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
        scene.labels.labels[i] = static_cast<std::int32_t>(best) + 1;
    }
    scene.labels.class_names.push_back("unlabelled");
    for (std::size_t k = 0; k < r; ++k) scene.labels.class_names.push_back("endmember_" + std::to_string(k + 1));
    return scene;
}

}  // namespace gypsum
