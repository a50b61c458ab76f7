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

// Core hyperspectral containers and the spectral math shared by every stage.
//
// Cubes are stored band-interleaved-by-pixel: the spectrum of pixel (r, c)
// is contiguous. All values are double precision regardless of the on-disk
// sample type.

#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gypsum {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Band centers in nanometres. Strictly increasing, finite and positive.
class WavelengthGrid {
public:
    WavelengthGrid() = default;
    explicit WavelengthGrid(std::vector<double> centers);

    /// `n` evenly spaced centers from `lo` to `hi` inclusive.
    static WavelengthGrid linspace(double lo, double hi, std::size_t n);

    std::size_t size() const noexcept { return centers_.size(); }
    bool empty() const noexcept { return centers_.empty(); }
    double operator[](std::size_t i) const { return centers_[i]; }
    const std::vector<double>& centers() const noexcept { return centers_; }

    bool operator==(const WavelengthGrid&) const = default;

private:
    std::vector<double> centers_;
};

struct PixelIndex {
    std::size_t row = 0;
    std::size_t col = 0;

    auto operator<=>(const PixelIndex&) const = default;
};

class HsiCube {
public:
    HsiCube() = default;
    /// Zero-filled cube.
    HsiCube(std::size_t rows, std::size_t cols, WavelengthGrid grid);
    /// Takes ownership of pixel-interleaved samples; size must be rows*cols*bands.
    HsiCube(std::size_t rows, std::size_t cols, WavelengthGrid grid, std::vector<double> bip);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t bands() const noexcept { return grid_.size(); }
    const WavelengthGrid& grid() const noexcept { return grid_; }

    double at(std::size_t r, std::size_t c, std::size_t b) const { return data_[offset(r, c) + b]; }
    double& at(std::size_t r, std::size_t c, std::size_t b) { return data_[offset(r, c) + b]; }

    std::span<const double> pixel(std::size_t r, std::size_t c) const {
        return {data_.data() + offset(r, c), bands()};
    }
    std::span<double> pixel(std::size_t r, std::size_t c) { return {data_.data() + offset(r, c), bands()}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const HsiCube&) const = default;

private:
    std::size_t offset(std::size_t r, std::size_t c) const { return (r * cols_ + c) * bands(); }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    WavelengthGrid grid_;
    std::vector<double> data_;
};

/// Per-pixel keep flags. A default-constructed mask of given size keeps everything.
class PixelMask {
public:
    PixelMask() = default;
    PixelMask(std::size_t rows, std::size_t cols, bool keep_all = true);
    PixelMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> keep);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool kept(std::size_t r, std::size_t c) const { return keep_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool keep) { keep_[r * cols_ + c] = keep ? 1 : 0; }
    std::size_t count() const;
    std::span<const std::uint8_t> flags() const noexcept { return keep_; }

    /// Pixels kept by both masks.
    PixelMask intersect(const PixelMask& other) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> keep_;
};

/// Flattened valid-pixel spectra (p x w) with a map back to raster coordinates.
struct PixelMatrix {
    std::size_t raster_rows = 0;
    std::size_t raster_cols = 0;
    RowMatrix spectra;
    std::vector<PixelIndex> origin;
    WavelengthGrid grid;

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(spectra.rows()); }
    std::size_t bands() const noexcept { return static_cast<std::size_t>(spectra.cols()); }
    std::span<const double> spectrum(std::size_t i) const { return {spectra.row(i).data(), bands()}; }
};

double l2_norm(std::span<const double> s);

/// Angle in radians between two nonzero spectra, in [0, pi].
/// Throws InvalidArgument on zero vectors or length mismatch.
double spectral_angle(std::span<const double> a, std::span<const double> b);

/// Unit-norm copy of `s`. Throws InvalidArgument for a zero-norm spectrum;
/// callers that need to mask such pixels should test `l2_norm` first.
std::vector<double> l2_normalize(std::span<const double> s);

/// Row-major traversal of the kept pixels. Throws InvalidArgument when the
/// mask does not match or nothing survives.
PixelMatrix flatten(const HsiCube& cube, const PixelMask* mask = nullptr);

/// Scatter a pixel matrix back into a cube; pixels absent from `origin` get `fill`.
HsiCube unflatten(const PixelMatrix& matrix, double fill = 0.0);

}  // namespace gypsum
