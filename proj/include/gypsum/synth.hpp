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

// Synthetic linear-mixture scenes with known endmembers, abundances and
// labels. Endmembers are a sloped continuum multiplied by Gaussian
// absorption features.

#pragma once

#include "gypsum/envi.hpp"
#include "gypsum/hsi.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace gypsum {

struct AbsorptionFeature {
    double center_nm = 1500.0;
    double width_nm = 40.0;  // Gaussian standard deviation
    double depth = 0.3;      // in (0, 1)
};

struct EndmemberSpec {
    double continuum_level = 0.5;  // reflectance at the grid midpoint
    double continuum_slope = 0.0;  // change across the full grid
    std::vector<AbsorptionFeature> features;
};

enum class Layout { Blocks, Voronoi };

struct SynthSpec {
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::size_t bands = 50;
    double wl_lo = 1000.0;
    double wl_hi = 2600.0;
    std::size_t endmembers = 5;
    std::vector<EndmemberSpec> endmember_specs;  // empty: drawn from the seed
    Layout layout = Layout::Voronoi;
    double min_purity = 0.85;  // dominant abundance ~ U[min_purity, 1]
    double snr_db = 35.0;      // +inf for a noiseless scene
    double column_gain_jitter = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

struct SynthScene {
    HsiCube cube;
    LabelRaster labels;      // 1..r, argmax abundance
    RowMatrix endmembers;    // r x w
    RowMatrix abundances;    // (rows*cols) x r, raster row-major
    double noise_sigma = 0.0;
    double signal_power = 0.0;  // mean squared noiseless sample
};

std::vector<double> endmember_spectrum(const EndmemberSpec& spec, const WavelengthGrid& grid);

/// Deterministic for a given spec (including seed).
SynthScene generate(const SynthSpec& spec);

}  // namespace gypsum
