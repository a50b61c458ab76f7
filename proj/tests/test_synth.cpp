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

#include "gypsum/error.hpp"
#include "gypsum/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace gypsum;

namespace {

RowMatrix cube_rows(const HsiCube& cube) {
    RowMatrix m(static_cast<Eigen::Index>(cube.rows() * cube.cols()), static_cast<Eigen::Index>(cube.bands()));
    std::copy(cube.data().begin(), cube.data().end(), m.data());
    return m;
}

}  // namespace

TEST_CASE("noiseless pure scene reproduces its endmembers exactly") {
    SynthSpec spec;
    spec.rows = 16;
    spec.cols = 16;
    spec.snr_db = kNoiseless;
    spec.min_purity = 1.0;
    spec.endmembers = 4;
    spec.seed = 2;
    const auto scene = generate(spec);
    CHECK(scene.noise_sigma == 0.0);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) {
            const auto e = static_cast<Eigen::Index>(scene.labels.at(r, c) - 1);
            for (std::size_t b = 0; b < spec.bands; ++b)
                CHECK(scene.cube.at(r, c, b) == scene.endmembers(e, static_cast<Eigen::Index>(b)));
        }
}

TEST_CASE("noiseless mixture rank equals the endmember count") {
    for (std::size_t r = 2; r <= 8; ++r) {
        SynthSpec spec;
        spec.snr_db = kNoiseless;
        spec.endmembers = r;
        spec.seed = r;
        const auto scene = generate(spec);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(cube_rows(scene.cube));
        const auto& sv = svd.singularValues();
        std::size_t rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > 1e-8 * sv(0)) ++rank;
        CHECK(rank == r);
    }
}

TEST_CASE("reported noise level reproduces the requested SNR") {
    for (double snr : {20.0, 30.0, 35.0, 45.0}) {
        SynthSpec spec;
        spec.snr_db = snr;
        spec.seed = 5;
        const auto scene = generate(spec);
        const RowMatrix clean = scene.abundances * scene.endmembers;
        const RowMatrix noise = cube_rows(scene.cube) - clean;
        const double noise_var = noise.squaredNorm() / static_cast<double>(noise.size());
        const double signal_power = clean.squaredNorm() / static_cast<double>(clean.size());
        CHECK(std::abs(signal_power - scene.signal_power) < 1e-12 * signal_power);
        const double measured = 10.0 * std::log10(signal_power / noise_var);
        CHECK(std::abs(measured - snr) < 0.01 * snr);
        CHECK(std::abs(std::sqrt(noise_var) - scene.noise_sigma) < 0.01 * scene.noise_sigma);
    }
}

TEST_CASE("abundances are a partition of unity and labels follow the argmax") {
    SynthSpec spec;
    spec.seed = 8;
    spec.min_purity = 0.6;
    const auto scene = generate(spec);
    for (Eigen::Index i = 0; i < scene.abundances.rows(); ++i) {
        CHECK(std::abs(scene.abundances.row(i).sum() - 1.0) < 1e-12);
        CHECK(scene.abundances.row(i).minCoeff() >= 0.0);
        Eigen::Index arg = 0;
        scene.abundances.row(i).maxCoeff(&arg);
        CHECK(scene.labels.labels[static_cast<std::size_t>(i)] == arg + 1);
    }
}

TEST_CASE("generation is bit-exact under a seed") {
    for (auto layout : {Layout::Voronoi, Layout::Blocks}) {
        SynthSpec spec;
        spec.layout = layout;
        spec.seed = 77;
        spec.column_gain_jitter = 0.05;
        const auto a = generate(spec), b = generate(spec);
        CHECK(a.cube == b.cube);
        CHECK(a.labels.labels == b.labels.labels);
        spec.seed = 78;
        CHECK_FALSE(generate(spec).cube == a.cube);
    }
}

TEST_CASE("every endmember owns a region") {
    for (auto layout : {Layout::Voronoi, Layout::Blocks}) {
        SynthSpec spec;
        spec.layout = layout;
        spec.endmembers = 7;
        spec.seed = 3;
        const auto scene = generate(spec);
        std::vector<std::size_t> count(8, 0);
        for (auto l : scene.labels.labels) ++count[static_cast<std::size_t>(l)];
        CHECK(count[0] == 0);
        for (std::size_t e = 1; e <= 7; ++e) CHECK(count[e] > 0);
    }
}

TEST_CASE("endmember spectrum follows the continuum times absorption product") {
    EndmemberSpec e;
    e.continuum_level = 0.6;
    e.continuum_slope = 0.2;
    e.features = {{1500.0, 30.0, 0.4}, {2200.0, 60.0, 0.25}};
    const auto grid = WavelengthGrid::linspace(1000, 2600, 81);
    const auto s = endmember_spectrum(e, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid[j];
        double expected = 0.6 + 0.2 * (x - 1800.0) / 1600.0;
        for (const auto& f : e.features)
            expected *= 1.0 - f.depth * std::exp(-0.5 * std::pow((x - f.center_nm) / f.width_nm, 2));
        CHECK(std::abs(s[j] - expected) < 1e-14);
    }
}

TEST_CASE("invalid scene specs are rejected") {
    SynthSpec spec;
    spec.endmembers = 11;
    CHECK_THROWS_AS(generate(spec), Error);
    spec = {};
    spec.endmember_specs.assign(spec.endmembers, EndmemberSpec{0.5, 0.0, {{1500.0, 30.0, 1.0}}});
    CHECK_THROWS_AS(generate(spec), Error);
    spec = {};
    spec.wl_lo = 3000;
    CHECK_THROWS_AS(generate(spec), Error);
}
