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

// Reflectance preprocessing: clip, optional ratioing, wavelength trim,
// per-pixel l2 normalisation, masking, optional continuum removal, flatten.

#pragma once

#include "gypsum/hsi.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gypsum {

enum class Workflow { Lab, Orbital };

/// Rectangle of bland pixels used to build a ratio spectrum.
struct RoiRect {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t rows = 1;
    std::size_t cols = 1;
};

struct PreprocessConfig {
    Workflow workflow = Workflow::Lab;
    double clip_lo = 0.0;
    double clip_hi = 1.0;
    double wl_min = 1050.0;
    double wl_max = 2550.0;
    std::vector<RoiRect> ratio_rois;
    bool continuum_removal = true;

    /// Defaults for a workflow: continuum removal on for lab data, off for orbital.
    static PreprocessConfig for_workflow(Workflow wf);
    /// Throws Config on inconsistent settings.
    void validate() const;
};

struct ClipResult {
    HsiCube cube;
    PixelMask finite;  // false where the pixel held NaN/Inf (those samples are zeroed)
};

ClipResult clip_reflectance(const HsiCube& cube, double lo = 0.0, double hi = 1.0);

/// Mean spectrum over the ROI pixels, skipping pixels rejected by `valid`.
std::vector<double> ratio_spectrum(const HsiCube& cube, std::span<const RoiRect> rois,
                                   const PixelMask* valid = nullptr);

inline constexpr double kRatioEpsilon = 1e-6;

/// Divide every pixel by the ROI-mean spectrum. Bands whose ratio value is
/// <= kRatioEpsilon raise an error naming the band. When `checked_window`
/// is given only bands inside [lo, hi] nm are validated and divided; the
/// others pass through untouched (they are trimmed later anyway).
HsiCube ratio_image(const HsiCube& cube, std::span<const RoiRect> rois, const PixelMask* valid = nullptr,
                    std::optional<std::pair<double, double>> checked_window = std::nullopt);

/// Keep exactly the bands with centre in [wl_min, wl_max] (inclusive).
HsiCube clip_wavelengths(const HsiCube& cube, double wl_min, double wl_max);

/// Upper convex hull of (wavelength, value) evaluated at every wavelength.
std::vector<double> upper_hull_continuum(std::span<const double> wavelengths, std::span<const double> values);

/// Spectrum divided by its upper-hull continuum. Requires finite,
/// nonnegative values with positive endpoints.
std::vector<double> remove_continuum(std::span<const double> wavelengths, std::span<const double> values);
PixelMatrix remove_continuum(const PixelMatrix& matrix);

struct PreprocessResult {
    PixelMatrix matrix;
    PixelMask kept;  // final set of pixels present in `matrix`
    std::size_t nonfinite_pixels = 0;
    std::size_t zero_norm_pixels = 0;
    std::size_t user_masked_pixels = 0;
    std::size_t continuum_rejected_pixels = 0;
};

/// Full preprocessing chain. `mask` (nonzero = keep) is optional.
PreprocessResult preprocess(const HsiCube& cube, const PreprocessConfig& config, const PixelMask* mask = nullptr);

}  // namespace gypsum
