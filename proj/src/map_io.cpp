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

#include <png.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace gypsum {

namespace {

void require_palette(const ClusterMap& map) {
    if (map.labels.size() != map.rows * map.cols) throw_invalid("cluster map raster size does not match its dimensions");
    if (map.palette.size() < map.k) throw_invalid("palette does not cover every cluster");
    for (const auto l : map.labels)
        if (l != kNoData && (l < 0 || static_cast<std::size_t>(l) >= map.k))
            throw_invalid("cluster label " + std::to_string(l) + " out of range");
}

}  // namespace

void write_cluster_map_png(const ClusterMap& map, const std::filesystem::path& path) {
    require_palette(map);
    std::vector<unsigned char> rgb(map.rows * map.cols * 3, 0);
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        if (map.labels[i] == kNoData) continue;
        const Rgb& c = map.palette[static_cast<std::size_t>(map.labels[i])];
        rgb[3 * i] = c.r;
        rgb[3 * i + 1] = c.g;
        rgb[3 * i + 2] = c.b;
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(map.cols);
    image.height = static_cast<png_uint_32>(map.rows);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
        const std::string why = image.message;
        png_image_free(&image);
        throw_io("cannot write PNG " + path.string() + ": " + why);
    }
}

void write_cluster_map_envi(const ClusterMap& map, const std::filesystem::path& header_path,
                            const std::filesystem::path& data_path) {
    require_palette(map);
    if (map.k + 1 > 65535) throw_invalid("too many clusters for a 16-bit label raster");
    LabelRaster out;
    out.rows = map.rows;
    out.cols = map.cols;
    out.labels.resize(map.labels.size());
    std::transform(map.labels.begin(), map.labels.end(), out.labels.begin(), [](std::int32_t l) { return l + 1; });
    out.class_names.push_back("no data");
    out.class_lookup.push_back({0, 0, 0});
    for (std::size_t q = 0; q < map.k; ++q) {
        out.class_names.push_back("cluster " + std::to_string(q));
        out.class_lookup.push_back(map.palette[q]);
    }
    write_label_raster(out, header_path, data_path);
}

ClusterMap read_cluster_map(const std::filesystem::path& header_path) {
    const LabelRaster raster = read_label_raster(header_path);
    ClusterMap map;
    map.rows = raster.rows;
    map.cols = raster.cols;
    map.labels.resize(raster.labels.size());
    std::int32_t top = 0;
    for (std::size_t i = 0; i < raster.labels.size(); ++i) {
        map.labels[i] = raster.labels[i] - 1;
        top = std::max(top, raster.labels[i]);
    }
    map.k = static_cast<std::size_t>(top);
    if (raster.class_lookup.size() >= map.k + 1) {
        map.palette.assign(raster.class_lookup.begin() + 1, raster.class_lookup.begin() + 1 + static_cast<std::ptrdiff_t>(map.k));
    } else {
        map.palette = default_palette(map.k);
    }
    map.cluster_sizes.assign(map.k, 0);
    for (const auto l : map.labels)
        if (l >= 0) ++map.cluster_sizes[static_cast<std::size_t>(l)];
    return map;
}

void write_cluster_means_csv(const ClusterMap& map, const WavelengthGrid& grid, const std::filesystem::path& path) {
    if (static_cast<std::size_t>(map.cluster_means.rows()) != map.k ||
        static_cast<std::size_t>(map.cluster_means.cols()) != grid.size())
        throw_invalid("cluster means do not match k and the wavelength grid");
    std::ofstream out(path);
    if (!out) throw_io("cannot write " + path.string());
    out << "cluster,pixels";
    for (std::size_t b = 0; b < grid.size(); ++b) out << ",nm_" << std::setprecision(10) << grid[b];
    out << '\n' << std::setprecision(17);
    for (std::size_t q = 0; q < map.k; ++q) {
        out << q << ',' << map.cluster_sizes[q];
        for (Eigen::Index b = 0; b < map.cluster_means.cols(); ++b)
            out << ',' << map.cluster_means(static_cast<Eigen::Index>(q), b);
        out << '\n';
    }
    if (!out) throw_io("write failed for " + path.string());
}

std::vector<Rgb> match_palette(const ClusterMap& current, const ClusterMap& reference) {
    if (current.rows != reference.rows || current.cols != reference.cols)
        throw_invalid("palette matching needs maps of the same dimensions");
    if (reference.palette.size() < reference.k) throw_invalid("reference palette does not cover every cluster");

    std::vector<std::vector<std::size_t>> overlap(current.k, std::vector<std::size_t>(reference.k, 0));
    std::vector<std::size_t> sizes(current.k, 0);
    for (std::size_t i = 0; i < current.labels.size(); ++i) {
        const auto a = current.labels[i], b = reference.labels[i];
        if (a < 0) continue;
        ++sizes[static_cast<std::size_t>(a)];
        if (b >= 0) ++overlap[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
    std::vector<std::size_t> order(current.k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sizes[x] > sizes[y]; });

    std::vector<Rgb> palette(current.k);
    std::vector<bool> assigned(current.k, false), consumed(reference.k, false);
    std::vector<Rgb> used;
    for (const auto q : order) {
        std::size_t best = reference.k, best_count = 0;
        for (std::size_t r = 0; r < reference.k; ++r)
            if (!consumed[r] && overlap[q][r] > best_count) {
                best = r;
                best_count = overlap[q][r];
            }
        if (best == reference.k) continue;
        consumed[best] = true;
        assigned[q] = true;
        palette[q] = reference.palette[best];
        used.push_back(palette[q]);
    }

    // Fallback colours for unmatched clusters, never repeating a colour in use.
    const std::size_t pool_size = current.k + used.size();
    const auto pool = default_palette(pool_size);
    std::size_t next = 0;
    for (const auto q : order) {
        if (assigned[q]) continue;
        while (std::find(used.begin(), used.end(), pool[next]) != used.end()) ++next;
        palette[q] = pool[next];
        used.push_back(pool[next]);
    }
    return palette;
}

}  // namespace gypsum
