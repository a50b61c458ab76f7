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

// Clustering: full-covariance Gaussian mixtures by EM, k-means and PCA for
// the baseline, and spectral-angle merging of redundant clusters.

#pragma once

#include "gypsum/envi.hpp"
#include "gypsum/hsi.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace gypsum {

inline constexpr std::int32_t kNoData = -1;

/// Rows of `points` chosen by k-means++ seeding.
RowMatrix kmeanspp_centers(const RowMatrix& points, std::size_t k, std::mt19937_64& rng);

struct KMeansResult {
    RowMatrix centers;                  // k x d
    std::vector<std::int32_t> labels;   // per point
    std::vector<double> inertia_trace;  // after each assignment step
    std::size_t iterations = 0;
};

KMeansResult kmeans_fit(const RowMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);

struct GmmOptions {
    std::size_t max_iter = 500;
    double tol = 1e-5;           // relative gain in mean log-likelihood
    double reg_relative = 1e-6;  // times the mean per-dimension data variance
    double collapse_weight = 1e-8;
    std::size_t max_reseeds = 3;
};

struct GmmModel {
    Eigen::VectorXd weights;                   // k
    RowMatrix means;                           // k x d
    std::vector<Eigen::MatrixXd> covariances;  // k of d x d
    std::vector<double> log_likelihood_trace;  // mean per point, one per E-step
    std::vector<std::size_t> reseed_iterations;
    double reg_covar = 0.0;  // absolute ridge added to every covariance
    std::size_t iterations = 0;
    bool converged = false;

    std::size_t k() const { return static_cast<std::size_t>(weights.size()); }
    std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
};

/// EM for a k-component full-covariance mixture. Initialised from k-means++
/// centres with a shared isotropic covariance. Collapsed components are
/// reseeded from the least-explained point, at most `max_reseeds` times.
GmmModel gmm_fit(const RowMatrix& points, std::size_t k, std::uint64_t seed, const GmmOptions& options = {});

/// Per-point log(π_q N(x | μ_q, Σ_q)), n x k.
Eigen::MatrixXd gmm_log_joint(const GmmModel& model, const RowMatrix& points);
Eigen::MatrixXd gmm_responsibilities(const GmmModel& model, const RowMatrix& points);
double gmm_mean_log_likelihood(const GmmModel& model, const RowMatrix& points);
/// Argmax responsibility, ties to the lowest component index.
std::vector<std::int32_t> gmm_assign(const GmmModel& model, const RowMatrix& points);

struct PcaResult {
    Eigen::VectorXd mean;                // w
    RowMatrix components;                // n x w, orthonormal rows
    RowMatrix projected;                 // p x n
    Eigen::VectorXd explained_variance;  // n, descending
};

/// SVD-based PCA on mean-centred data. Each component's largest-magnitude
/// entry is made positive.
PcaResult pca(const RowMatrix& points, std::size_t n_components);

/// Per-pixel hard labels on the raster plus per-cluster spectral summaries.
struct ClusterMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> labels;  // kNoData where masked
    std::size_t k = 0;
    RowMatrix cluster_means;           // k x w, in preprocessed spectral space
    std::vector<std::size_t> cluster_sizes;
    std::vector<Rgb> palette;          // k colours

    std::int32_t at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

/// Fixed high-contrast palette; never produces black (reserved for no-data).
std::vector<Rgb> default_palette(std::size_t k);

/// Scatter per-row labels of `matrix` onto its raster and compute means/sizes.
ClusterMap make_cluster_map(const PixelMatrix& matrix, std::span<const std::int32_t> pixel_labels, std::size_t k);

/// Labels of the rows of `matrix`, read back from the raster.
std::vector<std::int32_t> pixel_labels(const ClusterMap& map, const PixelMatrix& matrix);

struct MergeStep {
    std::int32_t kept = 0;      // cluster id before renumbering
    std::int32_t absorbed = 0;  // cluster id before renumbering
    double angle = 0.0;
};

struct MergeResult {
    ClusterMap map;
    std::vector<MergeStep> trace;
};

/// Repeatedly merge the pair of clusters whose mean spectra subtend the
/// smallest angle while that angle is below `lambda` (radians). Means are
/// size-weighted means of the rows of `matrix`. Empty clusters are dropped
/// and surviving labels renumbered densely in original order.
MergeResult merge_clusters(const ClusterMap& map, const PixelMatrix& matrix, double lambda);

}  // namespace gypsum
