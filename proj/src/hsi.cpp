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

#include "gypsum/hsi.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gypsum {

WavelengthGrid::WavelengthGrid(std::vector<double> centers) : centers_(std::move(centers)) {
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        if (!std::isfinite(centers_[i]) || centers_[i] <= 0.0)
            throw_invalid("wavelength " + std::to_string(i) + " is not finite and positive");
        if (i > 0 && centers_[i] <= centers_[i - 1])
            throw_invalid("wavelengths must be strictly increasing (index " + std::to_string(i) + ")");
    }
}

WavelengthGrid WavelengthGrid::linspace(double lo, double hi, std::size_t n) {
    if (n == 0) return WavelengthGrid{};
    if (n == 1) return WavelengthGrid{std::vector<double>{lo}};
    std::vector<double> c(n);
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) c[i] = lo + step * static_cast<double>(i);
    c.back() = hi;
    return WavelengthGrid{std::move(c)};
}

HsiCube::HsiCube(std::size_t rows, std::size_t cols, WavelengthGrid grid)
    : rows_(rows), cols_(cols), grid_(std::move(grid)), data_(rows * cols * grid_.size(), 0.0) {}

HsiCube::HsiCube(std::size_t rows, std::size_t cols, WavelengthGrid grid, std::vector<double> bip)
    : rows_(rows), cols_(cols), grid_(std::move(grid)), data_(std::move(bip)) {
    if (data_.size() != rows_ * cols_ * grid_.size())
        throw_invalid("cube data has " + std::to_string(data_.size()) + " samples, expected " +
                      std::to_string(rows_ * cols_ * grid_.size()));
}

PixelMask::PixelMask(std::size_t rows, std::size_t cols, bool keep_all)
    : rows_(rows), cols_(cols), keep_(rows * cols, keep_all ? 1 : 0) {}

PixelMask::PixelMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> keep)
    : rows_(rows), cols_(cols), keep_(std::move(keep)) {
    if (keep_.size() != rows_ * cols_) throw_invalid("mask size does not match its dimensions");
    for (auto& k : keep_) k = k != 0 ? 1 : 0;
}

std::size_t PixelMask::count() const {
    return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), std::uint8_t{1}));
}

PixelMask PixelMask::intersect(const PixelMask& other) const {
    if (other.rows_ != rows_ || other.cols_ != cols_) throw_invalid("mask dimensions differ");
    PixelMask out(rows_, cols_, false);
    for (std::size_t i = 0; i < keep_.size(); ++i) out.keep_[i] = keep_[i] & other.keep_[i];
    return out;
}

double l2_norm(std::span<const double> s) {
    double acc = 0.0;
    for (double v : s) acc += v * v;
    return std::sqrt(acc);
}

double spectral_angle(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw_invalid("spectral_angle: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw_invalid("spectral_angle: zero vector");
    const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return std::acos(cosine);
}

std::vector<double> l2_normalize(std::span<const double> s) {
    const double n = l2_norm(s);
    if (!(n > 0.0) || !std::isfinite(n)) throw_invalid("l2_normalize: zero or non-finite norm");
    std::vector<double> out(s.begin(), s.end());
    for (double& v : out) v /= n;
    return out;
}

PixelMatrix flatten(const HsiCube& cube, const PixelMask* mask) {
    if (mask && (mask->rows() != cube.rows() || mask->cols() != cube.cols()))
        throw_invalid("flatten: mask is " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                      " but cube is " + std::to_string(cube.rows()) + "x" + std::to_string(cube.cols()));
    PixelMatrix m;
    m.raster_rows = cube.rows();
    m.raster_cols = cube.cols();
    m.grid = cube.grid();
    for (std::size_t r = 0; r < cube.rows(); ++r)
        for (std::size_t c = 0; c < cube.cols(); ++c)
            if (!mask || mask->kept(r, c)) m.origin.push_back({r, c});
    if (m.origin.empty()) throw_invalid("flatten: every pixel is masked");
    const std::size_t w = cube.bands();
    m.spectra.resize(static_cast<Eigen::Index>(m.origin.size()), static_cast<Eigen::Index>(w));
    for (std::size_t i = 0; i < m.origin.size(); ++i) {
        auto px = cube.pixel(m.origin[i].row, m.origin[i].col);
        std::copy(px.begin(), px.end(), m.spectra.row(static_cast<Eigen::Index>(i)).data());
    }
    return m;
}

HsiCube unflatten(const PixelMatrix& matrix, double fill) {
    HsiCube cube(matrix.raster_rows, matrix.raster_cols, matrix.grid);
    std::fill(cube.data().begin(), cube.data().end(), fill);
    for (std::size_t i = 0; i < matrix.origin.size(); ++i) {
        auto dst = cube.pixel(matrix.origin[i].row, matrix.origin[i].col);
        auto src = matrix.spectrum(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return cube;
}

}  // namespace gypsum
