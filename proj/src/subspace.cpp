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

#include "gypsum/subspace.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace gypsum {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

NoiseEstimate estimate_noise(const RowMatrix& x, double ridge) {
    const Eigen::Index p = x.rows();
    const Eigen::Index w = x.cols();
    if (p <= w)
        throw_numerical("noise estimation needs more pixels than bands (p = " + std::to_string(p) +
                        ", w = " + std::to_string(w) + "); add pixels or reduce the band count");

    const Eigen::MatrixXd gram = symmetrized(x.transpose() * x);
    const double tau = ridge * gram.trace() / static_cast<double>(w);
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += tau;

    // Column i of `coef` regresses band i on the others: a ridge solve on the
    // Gram matrix with row and column i removed. Solving each reduced system
    // directly keeps residuals accurate when bands are exactly dependent.
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(w, w);
    std::vector<Eigen::Index> others(static_cast<std::size_t>(w - 1));
    for (Eigen::Index i = 0; i < w; ++i) {
        for (Eigen::Index j = 0, n = 0; j < w; ++j)
            if (j != i) others[static_cast<std::size_t>(n++)] = j;
        const Eigen::MatrixXd sub = reg(others, others);
        const Eigen::VectorXd rhs = gram(others, i);
        const Eigen::LLT<Eigen::MatrixXd> llt(sub);
        if (llt.info() != Eigen::Success) throw_numerical("noise regression is singular for band " + std::to_string(i));
        const Eigen::VectorXd beta = llt.solve(rhs);
        coef(others, i) = beta;
    }

    NoiseEstimate out;
    out.residuals = x - x * coef;
    const Eigen::MatrixXd raw = symmetrized(out.residuals.transpose() * out.residuals / static_cast<double>(p));
    out.raw_variance = raw.diagonal();

    Eigen::MatrixXd propagation = Eigen::MatrixXd::Identity(w, w);
    propagation += coef.cwiseProduct(coef).transpose();
    out.variance = propagation.partialPivLu().solve(out.raw_variance);
    for (Eigen::Index i = 0; i < w; ++i)
        if (!std::isfinite(out.variance(i)) || out.variance(i) <= 0.0 || out.variance(i) > out.raw_variance(i))
            out.variance(i) = out.raw_variance(i);

    Eigen::VectorXd scale(w);
    for (Eigen::Index i = 0; i < w; ++i)
        scale(i) = out.raw_variance(i) > 0.0 ? std::sqrt(out.variance(i) / out.raw_variance(i)) : 1.0;
    out.noise_corr = symmetrized(scale.asDiagonal() * raw * scale.asDiagonal());
    return out;
}

SubspaceResult estimate_dimension(const RowMatrix& x, const NoiseEstimate& noise) {
    const Eigen::Index p = x.rows();
    const Eigen::Index w = x.cols();
    if (noise.noise_corr.rows() != w || noise.noise_corr.cols() != w)
        throw_invalid("estimate_dimension: noise correlation does not match the band count");

    const Eigen::MatrixXd ry = symmetrized(x.transpose() * x / static_cast<double>(p));
    const Eigen::MatrixXd& rn = noise.noise_corr;
    const Eigen::MatrixXd rx = symmetrized(ry - rn);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rx);
    if (eig.info() != Eigen::Success) throw_numerical("eigendecomposition of the signal correlation failed");
    // Eigen sorts ascending; walk from the top. Negative eigenvalues are
    // clamped to zero, which leaves the eigenvectors unchanged.
    SubspaceResult res;
    Eigen::MatrixXd vecs(w, w);
    for (Eigen::Index k = 0; k < w; ++k) {
        const Eigen::Index src = w - 1 - k;
        vecs.col(k) = eig.eigenvectors().col(src);
        res.eigenvalues.push_back(std::max(0.0, eig.eigenvalues()(src)));
    }
    std::size_t negative = 0;
    for (Eigen::Index k = 0; k < w; ++k) {
        const Eigen::VectorXd e = vecs.col(k);
        const double cost = 2.0 * e.dot(rn * e) - e.dot(ry * e);
        res.per_direction_cost.push_back(cost);
        if (cost < 0.0) ++negative;
    }
    res.d = std::max<std::size_t>(1, negative);
    res.basis = vecs.leftCols(static_cast<Eigen::Index>(res.d));
    return res;
}

std::size_t cluster_count(std::size_t d, std::optional<std::size_t> override_k) {
    if (override_k) return *override_k;
    if (d == 0) throw_invalid("cluster_count: d must be at least 1");
    return 2 * d;
}

}  // namespace gypsum
