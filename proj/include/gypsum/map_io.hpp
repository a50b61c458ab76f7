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

// Cluster map outputs: PNG rendering, ENVI label raster, mean-spectrum CSV,
// and palette matching against a reference map.

#pragma once

#include "gypsum/cluster.hpp"
#include "gypsum/envi.hpp"

#include <filesystem>
#include <vector>

namespace gypsum {

/// 8-bit RGB; no-data pixels are black.
void write_cluster_map_png(const ClusterMap& map, const std::filesystem::path& path);

/// ENVI Classification raster: label + 1 as u16 BSQ, 0 = no data, palette in the class lookup.
void write_cluster_map_envi(const ClusterMap& map, const std::filesystem::path& header_path,
                            const std::filesystem::path& data_path);

/// Labels and palette of a map written by write_cluster_map_envi. Means are left empty.
ClusterMap read_cluster_map(const std::filesystem::path& header_path);

/// One row per cluster: id, size, then one column per wavelength.
void write_cluster_means_csv(const ClusterMap& map, const WavelengthGrid& grid,
                             const std::filesystem::path& path);

/// Clusters of `current`, largest first, take the colour of the reference
/// cluster they overlap most among those not yet taken. Clusters left over
/// draw from the default palette, skipping colours already in use.
std::vector<Rgb> match_palette(const ClusterMap& current, const ClusterMap& reference);

}  // namespace gypsum
