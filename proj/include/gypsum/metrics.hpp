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

// Clustering quality: Calinski-Harabasz and Davies-Bouldin on a point set,
// and F1 / NMI / ARI against reference labels.

#pragma once

#include "gypsum/hsi.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gypsum {

struct ContingencyTable {
    std::vector<std::int32_t> row_ids;  // distinct ids of the first labelling, ascending
    std::vector<std::int32_t> col_ids;  // distinct ids of the second labelling, ascending
    Eigen::MatrixXd counts;             // rows x cols
    Eigen::VectorXd row_sums;
    Eigen::VectorXd col_sums;
    double total = 0.0;
};

ContingencyTable contingency(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// (tr B / tr W)·(n − k)/(k − 1). +inf when tr W = 0. Throws for k < 2 or n <= k.
double calinski_harabasz(const RowMatrix& points, std::span<const std::int32_t> labels);

/// Mean over clusters of max_j (s_i + s_j)/d_ij with s_i the mean distance of
/// members to their centroid. +inf when two centroids coincide. Throws for k < 2.
double davies_bouldin(const RowMatrix& points, std::span<const std::int32_t> labels);

/// Mutual information over the arithmetic mean of the two entropies.
double nmi(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// Adjusted Rand index from pair counts.
double ari(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// Maximum-weight one-to-one assignment of rows to columns. Entry i is the
/// column matched to row i, or -1.
std::vector<int> max_weight_matching(const Eigen::MatrixXd& weight);

/// Clusters matched one-to-one to classes maximising total overlap; per-class
/// F1 from the match (0 for unmatched classes), macro-averaged over classes.
/// Ties in total overlap go to the match with the higher summed F1.
double f1_matched(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth);

struct MetricsReport {
    std::string space;  // "embedding" or "spectral"
    std::size_t k = 0;  // distinct clusters among evaluated points
    std::size_t points = 0;
    std::optional<double> ch;
    std::optional<double> db;
    std::optional<double> f1;
    std::optional<double> nmi;
    std::optional<double> ari;
    std::size_t labelled_points = 0;
    std::vector<std::string> notes;
};

/// CH and DB over rows with label >= 0; supervised scores over rows that
/// also have truth > 0 (0 is unlabelled) when `truth` is given.
MetricsReport evaluate(const RowMatrix& points, std::span<const std::int32_t> labels,
                       std::optional<std::span<const std::int32_t>> truth, std::string space);

}  // namespace gypsum
