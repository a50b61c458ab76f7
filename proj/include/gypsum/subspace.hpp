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

// Signal-subspace identification by minimum error (HySime): multiple
// regression noise estimation followed by an eigen-based selection of the
// directions whose signal power outweighs twice their noise power.

#pragma once

#include "gypsum/hsi.hpp"

#include <optional>
#include <vector>

namespace gypsum {

inline constexpr double kDefaultNoiseRidge = 1e-6;

struct NoiseEstimate {
    RowMatrix residuals;            // p x w regression residuals
    Eigen::VectorXd raw_variance;   // diag(residualsᵀ·residuals / p)
    Eigen::VectorXd variance;       // per-band noise variance after removing regressor noise
    Eigen::MatrixXd noise_corr;     // w x w residual correlation rescaled to `variance` on the diagonal
};

struct SubspaceResult {
    std::size_t d = 1;
    Eigen::MatrixXd basis;                  // w x d, orthonormal columns
    std::vector<double> eigenvalues;        // signal correlation eigenvalues, descending
    std::vector<double> per_direction_cost; // 2·eᵀRn·e − eᵀRy·e for each eigenvector, same order
};

/// Regress every band on all the others. `ridge` is relative to the mean
/// diagonal of the Gram matrix. Requires more pixels than bands.
///
/// A band's residual carries its own noise plus the noise of the bands it
/// was regressed on, weighted by the squared coefficients. With noise
/// uncorrelated across bands this gives raw = (I + (B∘B)ᵀ)·variance, which
/// is solved for the per-band variance. Without it the raw residual
/// variance overshoots by roughly 1/(1 − leverage) of the band.
NoiseEstimate estimate_noise(const RowMatrix& spectra, double ridge = kDefaultNoiseRidge);
inline NoiseEstimate estimate_noise(const PixelMatrix& m, double ridge = kDefaultNoiseRidge) {
    return estimate_noise(m.spectra, ridge);
}

SubspaceResult estimate_dimension(const RowMatrix& spectra, const NoiseEstimate& noise);
inline SubspaceResult estimate_dimension(const PixelMatrix& m, const NoiseEstimate& noise) {
    return estimate_dimension(m.spectra, noise);
}

/// Number of mixture components for a subspace of dimension d: 2d unless overridden.
std::size_t cluster_count(std::size_t d, std::optional<std::size_t> override_k = std::nullopt);

}  // namespace gypsum
