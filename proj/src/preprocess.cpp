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

#include "gypsum/preprocess.hpp"

#include "gypsum/error.hpp"

#include <cmath>
#include <string>

namespace gypsum {

PreprocessConfig PreprocessConfig::for_workflow(Workflow wf) {
    PreprocessConfig cfg;
    cfg.workflow = wf;
    cfg.continuum_removal = wf == Workflow::Lab;
    return cfg;
}

void PreprocessConfig::validate() const {
    if (!(clip_lo < clip_hi)) throw_config("preprocess: clip_lo must be below clip_hi");
    if (!(wl_min < wl_max)) throw_config("preprocess: wl_min must be below wl_max");
    if (!ratio_rois.empty() && workflow != Workflow::Orbital)
        throw_config("preprocess: ratio_rois are only valid for the orbital workflow");
    if (workflow == Workflow::Orbital && ratio_rois.empty())
        throw_config("preprocess: the orbital workflow needs at least one ratio ROI");
    for (const auto& roi : ratio_rois)
        if (roi.rows == 0 || roi.cols == 0) throw_config("preprocess: ratio ROI with zero extent");
}

ClipResult clip_reflectance(const HsiCube& cube, double lo, double hi) {
    ClipResult out{cube, PixelMask(cube.rows(), cube.cols(), true)};
    for (std::size_t r = 0; r < cube.rows(); ++r) {
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            bool finite = true;
            for (double& v : out.cube.pixel(r, c)) {
                if (!std::isfinite(v)) {
                    v = 0.0;
                    finite = false;
                } else {
                    v = std::clamp(v, lo, hi);
                }
            }
            if (!finite) out.finite.set(r, c, false);
        }
    }
    return out;
}

std::vector<double> ratio_spectrum(const HsiCube& cube, std::span<const RoiRect> rois, const PixelMask* valid) {
    if (rois.empty()) throw_invalid("ratio_spectrum: no ROI given");
    std::vector<double> mean(cube.bands(), 0.0);
    std::size_t n = 0;
    for (const auto& roi : rois) {
        if (roi.row + roi.rows > cube.rows() || roi.col + roi.cols > cube.cols())
            throw_invalid("ratio ROI at (" + std::to_string(roi.row) + ", " + std::to_string(roi.col) +
                          ") extends past the image");
        for (std::size_t r = roi.row; r < roi.row + roi.rows; ++r)
            for (std::size_t c = roi.col; c < roi.col + roi.cols; ++c) {
                if (valid && !valid->kept(r, c)) continue;
                // Running mean: exact when every ROI pixel is the same.
                auto px = cube.pixel(r, c);
                ++n;
                for (std::size_t b = 0; b < px.size(); ++b) mean[b] += (px[b] - mean[b]) / static_cast<double>(n);
            }
    }
    if (n == 0) throw_invalid("ratio ROIs contain no valid pixels");
    return mean;
}

HsiCube ratio_image(const HsiCube& cube, std::span<const RoiRect> rois, const PixelMask* valid,
                    std::optional<std::pair<double, double>> checked_window) {
    const auto ratio = ratio_spectrum(cube, rois, valid);
    std::vector<bool> active(cube.bands(), true);
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        const double wl = cube.grid()[b];
        if (checked_window && (wl < checked_window->first || wl > checked_window->second)) {
            active[b] = false;
            continue;
        }
        if (!(ratio[b] > kRatioEpsilon))
            throw_numerical("ratio spectrum is not positive in band " + std::to_string(b) + " (" +
                            std::to_string(wl) + " nm): " + std::to_string(ratio[b]));
    }
    HsiCube out = cube;
    for (std::size_t r = 0; r < cube.rows(); ++r)
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            auto px = out.pixel(r, c);
            for (std::size_t b = 0; b < px.size(); ++b)
                if (active[b]) px[b] /= ratio[b];
        }
    return out;
}

HsiCube clip_wavelengths(const HsiCube& cube, double wl_min, double wl_max) {
    std::vector<std::size_t> keep;
    std::vector<double> centers;
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        const double wl = cube.grid()[b];
        if (wl >= wl_min && wl <= wl_max) {
            keep.push_back(b);
            centers.push_back(wl);
        }
    }
    if (keep.empty())
        throw_invalid("no band centre lies in [" + std::to_string(wl_min) + ", " + std::to_string(wl_max) + "] nm");
    if (keep.size() == cube.bands()) return cube;
    std::vector<double> data;
    data.reserve(cube.rows() * cube.cols() * keep.size());
    for (std::size_t r = 0; r < cube.rows(); ++r)
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            auto px = cube.pixel(r, c);
            for (std::size_t b : keep) data.push_back(px[b]);
        }
    return HsiCube(cube.rows(), cube.cols(), WavelengthGrid(std::move(centers)), std::move(data));
}

std::vector<double> upper_hull_continuum(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw_invalid("upper_hull_continuum: bad input lengths");
    const std::size_t n = x.size();
    // Monotone chain, upper half. Collinear points are dropped.
    std::vector<std::size_t> hull;
    hull.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        while (hull.size() >= 2) {
            const std::size_t o = hull[hull.size() - 2], a = hull.back();
            const double cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o]);
            if (cross < 0.0) break;
            hull.pop_back();
        }
        hull.push_back(i);
    }
    std::vector<double> cont(n);
    for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
        const std::size_t i0 = hull[h], i1 = hull[h + 1];
        cont[i0] = y[i0];
        const double slope = (y[i1] - y[i0]) / (x[i1] - x[i0]);
        for (std::size_t j = i0 + 1; j < i1; ++j) cont[j] = y[i0] + slope * (x[j] - x[i0]);
    }
    cont[hull.back()] = y[hull.back()];
    return cont;
}

std::vector<double> remove_continuum(std::span<const double> x, std::span<const double> y) {
    for (double v : y)
        if (!std::isfinite(v)) throw_invalid("remove_continuum: non-finite spectrum");
    if (y.empty() || !(y.front() > 0.0) || !(y.back() > 0.0))
        throw_invalid("remove_continuum: spectrum endpoints must be positive");
    for (double v : y)
        if (v < 0.0) throw_invalid("remove_continuum: negative reflectance");
    auto cont = upper_hull_continuum(x, y);
    for (std::size_t i = 0; i < y.size(); ++i) cont[i] = y[i] / cont[i];
    return cont;
}

PixelMatrix remove_continuum(const PixelMatrix& matrix) {
    PixelMatrix out = matrix;
    const auto& wl = matrix.grid.centers();
    for (std::size_t i = 0; i < matrix.pixels(); ++i) {
        const auto cr = remove_continuum(wl, matrix.spectrum(i));
        std::copy(cr.begin(), cr.end(), out.spectra.row(static_cast<Eigen::Index>(i)).data());
    }
    return out;
}

PreprocessResult preprocess(const HsiCube& input, const PreprocessConfig& config, const PixelMask* mask) {
    config.validate();
    if (mask && (mask->rows() != input.rows() || mask->cols() != input.cols()))
        throw_invalid("mask is " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                      " but the cube is " + std::to_string(input.rows()) + "x" + std::to_string(input.cols()));

    PreprocessResult res;
    auto [cube, keep] = clip_reflectance(input, config.clip_lo, config.clip_hi);
    res.nonfinite_pixels = input.rows() * input.cols() - keep.count();

    if (config.workflow == Workflow::Orbital && !config.ratio_rois.empty())
        cube = ratio_image(cube, config.ratio_rois, &keep, std::make_pair(config.wl_min, config.wl_max));

    cube = clip_wavelengths(cube, config.wl_min, config.wl_max);

    for (std::size_t r = 0; r < cube.rows(); ++r)
        for (std::size_t c = 0; c < cube.cols(); ++c) {
            if (!keep.kept(r, c)) continue;
            auto px = cube.pixel(r, c);
            const double n = l2_norm(px);
            if (!(n > 0.0) || !std::isfinite(n)) {
                keep.set(r, c, false);
                ++res.zero_norm_pixels;
                continue;
            }
            for (double& v : px) v /= n;
        }

    if (mask) {
        const std::size_t before = keep.count();
        keep = keep.intersect(*mask);
        res.user_masked_pixels = before - keep.count();
    }

    if (config.continuum_removal) {
        for (std::size_t r = 0; r < cube.rows(); ++r)
            for (std::size_t c = 0; c < cube.cols(); ++c) {
                if (!keep.kept(r, c)) continue;
                auto px = cube.pixel(r, c);
                if (!(px.front() > 0.0) || !(px.back() > 0.0)) {
                    keep.set(r, c, false);
                    ++res.continuum_rejected_pixels;
                    continue;
                }
                const auto cr = remove_continuum(cube.grid().centers(), px);
                std::copy(cr.begin(), cr.end(), px.begin());
            }
    }

    res.matrix = flatten(cube, &keep);
    res.kept = std::move(keep);
    return res;
}

}  // namespace gypsum
