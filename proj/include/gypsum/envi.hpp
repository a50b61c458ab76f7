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

// ENVI raster I/O: text header plus raw binary payload.

#pragma once

#include "gypsum/hsi.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gypsum {

enum class Interleave { Bsq, Bil, Bip };
enum class ByteOrder { Little = 0, Big = 1 };

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb&) const = default;
};

struct EnviHeader {
    std::size_t samples = 0;  // columns
    std::size_t lines = 0;    // rows
    std::size_t bands = 0;
    Interleave interleave = Interleave::Bsq;
    int data_type = 4;
    ByteOrder byte_order = ByteOrder::Little;
    std::size_t header_offset = 0;
    std::optional<std::vector<double>> wavelength;  // already converted to nm
    std::string file_type = "ENVI Standard";
    std::optional<double> data_ignore_value;
    std::vector<Rgb> class_lookup;
    std::vector<std::string> class_names;
};

/// Bytes per sample for an ENVI data type code; throws for unsupported codes.
std::size_t envi_element_size(int data_type);

/// Parse header text. Keys are case-insensitive, brace lists may span lines,
/// unknown keys are ignored. Micrometre wavelengths are converted to nm.
EnviHeader parse_envi_header(std::string_view text);
EnviHeader read_envi_header(const std::filesystem::path& header_path);
std::string format_envi_header(const EnviHeader& header);

/// Locate the payload next to a header (`x.hdr` -> `x.img`, `x.dat`, `x.raw`, `x`).
std::filesystem::path find_envi_payload(const std::filesystem::path& header_path);

/// Raw samples widened to double, returned pixel-interleaved (line, sample, band).
std::vector<double> read_envi_samples(const EnviHeader& header, const std::filesystem::path& data_path);

/// Band centres from a sidecar text file: one value per line, or comma/space separated.
std::vector<double> read_wavelength_sidecar(const std::filesystem::path& path);

HsiCube read_envi(const std::filesystem::path& header_path,
                  const std::optional<std::filesystem::path>& data_path = std::nullopt,
                  const std::optional<std::filesystem::path>& wavelength_sidecar = std::nullopt);

/// Write a cube as float32 (data_type 4) or float64 (5) in the given interleave.
void write_envi(const HsiCube& cube, const std::filesystem::path& header_path,
                const std::filesystem::path& data_path, Interleave interleave = Interleave::Bsq,
                int data_type = 4);

/// Integer class raster; id 0 means unlabelled.
struct LabelRaster {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> labels;
    std::vector<std::string> class_names;  // indexed by id when present
    std::vector<Rgb> class_lookup;         // indexed by id when present

    std::int32_t at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

LabelRaster read_label_raster(const std::filesystem::path& header_path,
                              const std::optional<std::filesystem::path>& data_path = std::nullopt);

/// 16-bit unsigned BSQ. Written as an ENVI Classification file when a lookup is present.
void write_label_raster(const LabelRaster& raster, const std::filesystem::path& header_path,
                        const std::filesystem::path& data_path);

/// 8-bit raster, nonzero keeps the pixel.
PixelMask read_mask(const std::filesystem::path& header_path,
                    const std::optional<std::filesystem::path>& data_path = std::nullopt);
void write_mask(const PixelMask& mask, const std::filesystem::path& header_path,
                const std::filesystem::path& data_path);

}  // namespace gypsum
