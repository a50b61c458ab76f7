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

#include "gypsum/cluster.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gypsum {

namespace {

double sq_dist(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

double mean_dim_variance(const RowMatrix& x) {
    const Eigen::RowVectorXd mu = x.colwise().mean();
    return (x.rowwise() - mu).squaredNorm() / static_cast<double>(x.rows() * x.cols());
}

double log_sum_exp(const Eigen::RowVectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

RowMatrix kmeanspp_centers(const RowMatrix& x, std::size_t k, std::mt19937_64& rng) {
    const auto n = x.rows();
    if (k == 0 || static_cast<Eigen::Index>(k) > n) throw_invalid("k-means++: need 1 <= k <= number of points");
    RowMatrix centers(static_cast<Eigen::Index>(k), x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);

    Eigen::Index first = pick(rng);
    centers.row(0) = x.row(first);
    chosen[static_cast<std::size_t>(first)] = true;
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = sq_dist(x, i, centers, 0);

    for (std::size_t c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index next = -1;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= target && d2(i) > 0.0) {
                    next = i;
                    break;
                }
            }
            if (next < 0)
                for (Eigen::Index i = n; i-- > 0;)
                    if (d2(i) > 0.0) {
                        next = i;
                        break;
                    }
        } else {
            // All remaining points coincide with a centre; take any unused one.
            do next = pick(rng);
            while (chosen[static_cast<std::size_t>(next)]);
        }
        chosen[static_cast<std::size_t>(next)] = true;
        const auto ci = static_cast<Eigen::Index>(c);
        centers.row(ci) = x.row(next);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(x, i, centers, ci));
    }
    return centers;
}

KMeansResult kmeans_fit(const RowMatrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
    const auto n = x.rows();
    if (k == 0 || static_cast<Eigen::Index>(k) > n) throw_invalid("k-means: need 1 <= k <= number of points");
    std::mt19937_64 rng(seed);
    KMeansResult res;
    res.centers = kmeanspp_centers(x, k, rng);
    res.labels.assign(static_cast<std::size_t>(n), -1);
    const auto kk = static_cast<Eigen::Index>(k);

    std::vector<double> dist(static_cast<std::size_t>(n));
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            double best_d = sq_dist(x, i, res.centers, 0);
            for (Eigen::Index c = 1; c < kk; ++c) {
                const double d = sq_dist(x, i, res.centers, c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            const auto si = static_cast<std::size_t>(i);
            if (res.labels[si] != static_cast<std::int32_t>(best)) changed = true;
            res.labels[si] = static_cast<std::int32_t>(best);
            dist[si] = best_d;
            inertia += best_d;
        }
        res.iterations = iter + 1;

        // Reseed empty clusters with the point farthest from its centre.
        std::vector<std::size_t> counts(k, 0);
        for (auto l : res.labels) ++counts[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            inertia -= dist[far];
            --counts[static_cast<std::size_t>(res.labels[far])];
            res.labels[far] = static_cast<std::int32_t>(c);
            ++counts[c];
            dist[far] = 0.0;
            res.centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(far));
            changed = true;
        }
        res.inertia_trace.push_back(inertia);
        if (!changed) break;

        RowMatrix sums = RowMatrix::Zero(kk, x.cols());
        for (Eigen::Index i = 0; i < n; ++i) sums.row(res.labels[static_cast<std::size_t>(i)]) += x.row(i);
        for (Eigen::Index c = 0; c < kk; ++c)
            res.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    return res;
}

Eigen::MatrixXd gmm_log_joint(const GmmModel& model, const RowMatrix& x) {
    const auto n = x.rows();
    const auto k = static_cast<Eigen::Index>(model.k());
    const auto d = x.cols();
    if (d != model.means.cols()) throw_invalid("gmm: point dimension does not match the model");
    Eigen::MatrixXd out(n, k);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Eigen::Index q = 0; q < k; ++q) {
        Eigen::LLT<Eigen::MatrixXd> llt(model.covariances[static_cast<std::size_t>(q)]);
        if (llt.info() != Eigen::Success)
            throw_numerical("gmm: covariance of component " + std::to_string(q) + " is not positive definite");
        const Eigen::MatrixXd l = llt.matrixL();
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        const double base = std::log(model.weights(q)) - 0.5 * (static_cast<double>(d) * log2pi + log_det);
        Eigen::MatrixXd centred = (x.rowwise() - model.means.row(q)).transpose();
        llt.matrixL().solveInPlace(centred);
        out.col(q) = (base - 0.5 * centred.colwise().squaredNorm().array()).transpose();
    }
    return out;
}

Eigen::MatrixXd gmm_responsibilities(const GmmModel& model, const RowMatrix& x) {
    Eigen::MatrixXd lj = gmm_log_joint(model, x);
    for (Eigen::Index i = 0; i < lj.rows(); ++i) {
        const double lse = log_sum_exp(lj.row(i));
        lj.row(i) = (lj.row(i).array() - lse).exp();
    }
    return lj;
}

double gmm_mean_log_likelihood(const GmmModel& model, const RowMatrix& x) {
    const Eigen::MatrixXd lj = gmm_log_joint(model, x);
    double total = 0.0;
    for (Eigen::Index i = 0; i < lj.rows(); ++i) total += log_sum_exp(lj.row(i));
    return total / static_cast<double>(lj.rows());
}

std::vector<std::int32_t> gmm_assign(const GmmModel& model, const RowMatrix& x) {
    const Eigen::MatrixXd lj = gmm_log_joint(model, x);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(lj.rows()));
    for (Eigen::Index i = 0; i < lj.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index q = 1; q < lj.cols(); ++q)
            if (lj(i, q) > lj(i, best)) best = q;
        labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
    }
    return labels;
}

GmmModel gmm_fit(const RowMatrix& x, std::size_t k, std::uint64_t seed, const GmmOptions& opt) {
    const auto n = x.rows();
    const auto d = x.cols();
    if (k == 0 || d == 0) throw_invalid("gmm: need k >= 1 and at least one dimension");
    if (n <= static_cast<Eigen::Index>(k))
        throw_invalid("gmm: need more points (" + std::to_string(n) + ") than components (" + std::to_string(k) + ")");
    const auto kk = static_cast<Eigen::Index>(k);

    std::mt19937_64 rng(seed);
    GmmModel m;
    const double data_var = mean_dim_variance(x);
    m.reg_covar = opt.reg_relative * (data_var > 0.0 ? data_var : 1.0);
    m.means = kmeanspp_centers(x, k, rng);

    double init_var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index q = 0; q < kk; ++q) best = std::min(best, sq_dist(x, i, m.means, q));
        init_var += best;
    }
    init_var /= static_cast<double>(n * d);
    if (!(init_var > 0.0)) init_var = data_var > 0.0 ? data_var : 1.0;
    const Eigen::MatrixXd init_cov =
        Eigen::MatrixXd::Identity(d, d) * (init_var + m.reg_covar);

    m.weights = Eigen::VectorXd::Constant(kk, 1.0 / static_cast<double>(k));
    m.covariances.assign(k, init_cov);

    for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
        // E-step
        Eigen::MatrixXd resp = gmm_log_joint(m, x);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double lse = log_sum_exp(resp.row(i));
            ll += lse;
            resp.row(i) = (resp.row(i).array() - lse).exp();
        }
        ll /= static_cast<double>(n);
        if (!std::isfinite(ll)) throw_numerical("gmm: log-likelihood is not finite at iteration " + std::to_string(iter));
        const bool after_reseed = !m.reseed_iterations.empty() && m.reseed_iterations.back() == iter;
        if (!m.log_likelihood_trace.empty() && !after_reseed) {
            const double prev = m.log_likelihood_trace.back();
            m.log_likelihood_trace.push_back(ll);
            m.iterations = iter + 1;
            if (ll - prev < opt.tol * std::max(1.0, std::abs(prev))) {
                m.converged = true;
                break;
            }
        } else {
            m.log_likelihood_trace.push_back(ll);
            m.iterations = iter + 1;
        }
        if (iter + 1 == opt.max_iter) break;

        // M-step
        const Eigen::VectorXd nk = resp.colwise().sum().transpose();
        std::vector<Eigen::Index> collapsed;
        for (Eigen::Index q = 0; q < kk; ++q) {
            if (nk(q) / static_cast<double>(n) < opt.collapse_weight) {
                collapsed.push_back(q);
                continue;
            }
            m.weights(q) = nk(q) / static_cast<double>(n);
            m.means.row(q) = (resp.col(q).transpose() * x) / nk(q);
            const RowMatrix centred = x.rowwise() - m.means.row(q);
            Eigen::MatrixXd cov = centred.transpose() * resp.col(q).asDiagonal() * centred / nk(q);
            cov = 0.5 * (cov + cov.transpose());
            cov.diagonal().array() += m.reg_covar;
            m.covariances[static_cast<std::size_t>(q)] = std::move(cov);
        }
        if (!collapsed.empty()) {
            if (m.reseed_iterations.size() >= opt.max_reseeds)
                throw_numerical("gmm: component collapse persisted after " + std::to_string(opt.max_reseeds) +
                                " reseeds");
            const Eigen::VectorXd best = resp.rowwise().maxCoeff();
            std::vector<bool> used(static_cast<std::size_t>(n), false);
            for (Eigen::Index q : collapsed) {
                Eigen::Index pick = -1;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (!used[static_cast<std::size_t>(i)] && (pick < 0 || best(i) < best(pick))) pick = i;
                used[static_cast<std::size_t>(pick)] = true;
                m.means.row(q) = x.row(pick);
                m.covariances[static_cast<std::size_t>(q)] = init_cov;
                m.weights(q) = 1.0 / static_cast<double>(k);
            }
            m.weights /= m.weights.sum();
            m.reseed_iterations.push_back(iter + 1);
        }
    }
    return m;
}

PcaResult pca(const RowMatrix& x, std::size_t n_components) {
    const auto p = x.rows();
    const auto w = x.cols();
    if (n_components == 0 || static_cast<Eigen::Index>(n_components) > std::min(p, w))
        throw_invalid("pca: n_components must be in 1..min(p, w)");
    const auto nc = static_cast<Eigen::Index>(n_components);
    PcaResult res;
    res.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = x.rowwise() - res.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
    Eigen::MatrixXd v = svd.matrixV().leftCols(nc);
    for (Eigen::Index c = 0; c < nc; ++c) {
        Eigen::Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < 0.0) v.col(c) *= -1.0;
    }
    res.components = v.transpose();
    res.projected = centred * v;
    const double denom = p > 1 ? static_cast<double>(p - 1) : 1.0;
    res.explained_variance = svd.singularValues().head(nc).array().square() / denom;
    return res;
}

std::vector<Rgb> default_palette(std::size_t k) {
    static constexpr Rgb kBase[] = {
        {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {67, 99, 216},   {245, 130, 49},
        {145, 30, 180},  {66, 212, 244},  {240, 50, 230},  {191, 239, 69},  {250, 190, 212},
        {70, 153, 144},  {220, 190, 255}, {154, 99, 36},   {255, 250, 200}, {128, 0, 0},
        {170, 255, 195}, {128, 128, 0},   {255, 216, 177}, {0, 0, 117},     {169, 169, 169},
    };
    constexpr std::size_t nbase = std::size(kBase);
    std::vector<Rgb> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (i < nbase) {
            out.push_back(kBase[i]);
            continue;
        }
        // Golden-angle hue walk, full saturation, bright value.
        const double h = std::fmod(static_cast<double>(i - nbase) * 0.618033988749895 + 0.11, 1.0) * 6.0;
        const double v = 0.95 - 0.25 * static_cast<double>((i - nbase) / 7 % 3) / 2.0;
        const double f = h - std::floor(h);
        const double rgb[6][3] = {{1, f, 0}, {1 - f, 1, 0}, {0, 1, f}, {0, 1 - f, 1}, {f, 0, 1}, {1, 0, 1 - f}};
        const auto& c = rgb[static_cast<int>(h) % 6];
        out.push_back({static_cast<std::uint8_t>(std::lround(255 * v * c[0])),
                       static_cast<std::uint8_t>(std::lround(255 * v * c[1])),
                       static_cast<std::uint8_t>(std::lround(255 * v * c[2]))});
    }
    return out;
}

ClusterMap make_cluster_map(const PixelMatrix& matrix, std::span<const std::int32_t> labels, std::size_t k) {
    if (labels.size() != matrix.pixels()) throw_invalid("cluster map: one label per pixel row required");
    ClusterMap map;
    map.rows = matrix.raster_rows;
    map.cols = matrix.raster_cols;
    map.labels.assign(map.rows * map.cols, kNoData);
    map.k = k;
    map.cluster_sizes.assign(k, 0);
    map.cluster_means = RowMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(matrix.bands()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= k) throw_invalid("cluster map: label out of range");
        const auto& o = matrix.origin[i];
        map.labels[o.row * map.cols + o.col] = l;
        ++map.cluster_sizes[static_cast<std::size_t>(l)];
        map.cluster_means.row(l) += matrix.spectra.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t q = 0; q < k; ++q)
        if (map.cluster_sizes[q] > 0)
            map.cluster_means.row(static_cast<Eigen::Index>(q)) /= static_cast<double>(map.cluster_sizes[q]);
    map.palette = default_palette(k);
    return map;
}

std::vector<std::int32_t> pixel_labels(const ClusterMap& map, const PixelMatrix& matrix) {
    if (map.rows != matrix.raster_rows || map.cols != matrix.raster_cols)
        throw_invalid("cluster map and pixel matrix rasters differ");
    std::vector<std::int32_t> out(matrix.pixels());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = map.at(matrix.origin[i].row, matrix.origin[i].col);
    return out;
}

MergeResult merge_clusters(const ClusterMap& map, const PixelMatrix& matrix, double lambda) {
    if (!(lambda >= 0.0)) throw_invalid("merge_clusters: lambda must be nonnegative");
    const auto labels = pixel_labels(map, matrix);
    const std::size_t k = map.k;
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(matrix.bands()));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw_invalid("merge_clusters: pixel row without a cluster label");
        sums.row(labels[i]) += matrix.spectra.row(static_cast<Eigen::Index>(i));
        ++sizes[static_cast<std::size_t>(labels[i])];
    }

    std::vector<std::int32_t> alive;
    for (std::size_t q = 0; q < k; ++q)
        if (sizes[q] > 0) alive.push_back(static_cast<std::int32_t>(q));
    std::vector<std::int32_t> target(k);
    for (std::size_t q = 0; q < k; ++q) target[q] = static_cast<std::int32_t>(q);

    auto angle = [&](std::int32_t a, std::int32_t b) {
        const Eigen::RowVectorXd u = sums.row(a), v = sums.row(b);
        const double nu = u.norm(), nv = v.norm();
        if (nu == 0.0 || nv == 0.0) return std::numbers::pi / 2.0;
        return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
    };

    MergeResult res;
    while (alive.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < alive.size(); ++i)
            for (std::size_t j = i + 1; j < alive.size(); ++j) {
                const double a = angle(alive[i], alive[j]);
                if (a < best) {
                    best = a;
                    bi = i;
                    bj = j;
                }
            }
        if (!(best < lambda)) break;
        const std::int32_t keep = alive[bi], gone = alive[bj];
        sums.row(keep) += sums.row(gone);
        sizes[static_cast<std::size_t>(keep)] += sizes[static_cast<std::size_t>(gone)];
        for (auto& t : target)
            if (t == gone) t = keep;
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bj));
        res.trace.push_back({keep, gone, best});
    }

    std::vector<std::int32_t> dense(k, kNoData);
    for (std::size_t i = 0; i < alive.size(); ++i) dense[static_cast<std::size_t>(alive[i])] = static_cast<std::int32_t>(i);
    std::vector<std::int32_t> relabelled(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        relabelled[i] = dense[static_cast<std::size_t>(target[static_cast<std::size_t>(labels[i])])];
    res.map = make_cluster_map(matrix, relabelled, alive.size());
    return res;
}

}  // namespace gypsum
