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

#include "gypsum/metrics.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace gypsum {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::int32_t> distinct(std::span<const std::int32_t> v) {
    std::vector<std::int32_t> ids(v.begin(), v.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<Eigen::Index> compact(std::span<const std::int32_t> v, const std::vector<std::int32_t>& ids) {
    std::vector<Eigen::Index> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::lower_bound(ids.begin(), ids.end(), v[i]) - ids.begin();
    return out;
}

struct Centroids {
    RowMatrix centers;
    Eigen::VectorXd sizes;
    std::vector<Eigen::Index> member;
};

Centroids centroids(const RowMatrix& x, std::span<const std::int32_t> labels, const char* who) {
    if (static_cast<std::size_t>(x.rows()) != labels.size())
        throw_invalid(std::string(who) + ": one label per point required");
    const auto ids = distinct(labels);
    if (ids.size() < 2) throw_invalid(std::string(who) + ": undefined for fewer than 2 clusters");
    Centroids c;
    c.member = compact(labels, ids);
    const auto k = static_cast<Eigen::Index>(ids.size());
    c.centers = RowMatrix::Zero(k, x.cols());
    c.sizes = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        c.centers.row(c.member[static_cast<std::size_t>(i)]) += x.row(i);
        c.sizes(c.member[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index q = 0; q < k; ++q) c.centers.row(q) /= c.sizes(q);
    return c;
}

double comb2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

ContingencyTable contingency(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    if (a.size() != b.size()) throw_invalid("labelling lengths differ");
    if (a.empty()) throw_invalid("empty labelling");
    ContingencyTable t;
    t.row_ids = distinct(a);
    t.col_ids = distinct(b);
    const auto ra = compact(a, t.row_ids), cb = compact(b, t.col_ids);
    t.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.row_ids.size()),
                                     static_cast<Eigen::Index>(t.col_ids.size()));
    for (std::size_t i = 0; i < a.size(); ++i) t.counts(ra[i], cb[i]) += 1.0;
    t.row_sums = t.counts.rowwise().sum();
    t.col_sums = t.counts.colwise().sum().transpose();
    t.total = static_cast<double>(a.size());
    return t;
}

double calinski_harabasz(const RowMatrix& x, std::span<const std::int32_t> labels) {
    const auto c = centroids(x, labels, "calinski_harabasz");
    const double n = static_cast<double>(x.rows());
    const double k = static_cast<double>(c.sizes.size());
    if (n <= k) throw_invalid("calinski_harabasz: needs more points than clusters");
    const Eigen::RowVectorXd overall = x.colwise().mean();
    double within = 0.0, between = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        within += (x.row(i) - c.centers.row(c.member[static_cast<std::size_t>(i)])).squaredNorm();
    for (Eigen::Index q = 0; q < c.centers.rows(); ++q)
        between += c.sizes(q) * (c.centers.row(q) - overall).squaredNorm();
    if (within == 0.0) return kInf;
    return between / within * (n - k) / (k - 1.0);
}

double davies_bouldin(const RowMatrix& x, std::span<const std::int32_t> labels) {
    const auto c = centroids(x, labels, "davies_bouldin");
    const auto k = c.centers.rows();
    Eigen::VectorXd spread = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto q = c.member[static_cast<std::size_t>(i)];
        spread(q) += (x.row(i) - c.centers.row(q)).norm();
    }
    spread.array() /= c.sizes.array();
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (j == i) continue;
            const double dist = (c.centers.row(i) - c.centers.row(j)).norm();
            if (dist == 0.0) return kInf;
            worst = std::max(worst, (spread(i) + spread(j)) / dist);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

double nmi(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    const auto t = contingency(a, b);
    const bool single_a = t.row_ids.size() == 1, single_b = t.col_ids.size() == 1;
    if (single_a && single_b) return 1.0;
    if (single_a || single_b) return 0.0;
    const double n = t.total;
    auto entropy = [n](const Eigen::VectorXd& sums) {
        double h = 0.0;
        for (Eigen::Index i = 0; i < sums.size(); ++i)
            if (sums(i) > 0.0) h -= sums(i) / n * std::log(sums(i) / n);
        return h;
    };
    double mi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const double nij = t.counts(i, j);
            if (nij > 0.0) mi += nij / n * std::log(n * nij / (t.row_sums(i) * t.col_sums(j)));
        }
    const double denom = 0.5 * (entropy(t.row_sums) + entropy(t.col_sums));
    return std::clamp(mi / denom, 0.0, 1.0);
}

double ari(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    const auto t = contingency(a, b);
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i)
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) index += comb2(t.counts(i, j));
    for (Eigen::Index i = 0; i < t.row_sums.size(); ++i) sa += comb2(t.row_sums(i));
    for (Eigen::Index j = 0; j < t.col_sums.size(); ++j) sb += comb2(t.col_sums(j));
    // (index - expected) / (max - expected), scaled by the pair count so every
    // term stays an integer-valued double for moderate n.
    const double pairs = comb2(t.total);
    const double num = pairs * index - sa * sb;
    const double den = 0.5 * pairs * (sa + sb) - sa * sb;
    if (den == 0.0) return 1.0;
    return num / den;
}

std::vector<int> max_weight_matching(const Eigen::MatrixXd& weight) {
    // Hungarian algorithm (potentials form) on a square cost matrix padded
    // with zero-weight dummies; cost = max − weight.
    const int rows = static_cast<int>(weight.rows()), cols = static_cast<int>(weight.cols());
    const int n = std::max(rows, cols);
    if (n == 0) return {};
    const double top = weight.size() ? weight.maxCoeff() : 0.0;
    auto cost = [&](int i, int j) { return (i < rows && j < cols) ? top - weight(i, j) : top; };

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] >= 1 && match[j] <= rows && j <= cols) out[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return out;
}

double f1_matched(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
    const auto t = contingency(pred, truth);
    const auto classes = t.counts.cols();
    Eigen::MatrixXd f1(t.counts.rows(), classes);
    for (Eigen::Index i = 0; i < f1.rows(); ++i)
        for (Eigen::Index j = 0; j < classes; ++j) f1(i, j) = 2.0 * t.counts(i, j) / (t.row_sums(i) + t.col_sums(j));
    // Overlaps are whole pixel counts and the F1 term sums to below one, so
    // ties in total overlap go to the higher summed F1 whatever the label ids.
    const auto assignment = max_weight_matching(t.counts + f1 / static_cast<double>(classes + 1));
    double total = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
        const int j = assignment[static_cast<std::size_t>(i)];
        if (j >= 0) total += f1(i, j);
    }
    return total / static_cast<double>(classes);
}

MetricsReport evaluate(const RowMatrix& points, std::span<const std::int32_t> labels,
                       std::optional<std::span<const std::int32_t>> truth, std::string space) {
    if (static_cast<std::size_t>(points.rows()) != labels.size()) throw_invalid("evaluate: one label per point required");
    if (truth && truth->size() != labels.size()) throw_invalid("evaluate: truth length differs from labels");

    MetricsReport rep;
    rep.space = std::move(space);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) keep.push_back(static_cast<Eigen::Index>(i));
    RowMatrix x(static_cast<Eigen::Index>(keep.size()), points.cols());
    std::vector<std::int32_t> lab(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = points.row(keep[i]);
        lab[i] = labels[static_cast<std::size_t>(keep[i])];
    }
    rep.points = keep.size();
    rep.k = distinct(lab).size();
    if (rep.k >= 2 && rep.points > rep.k) {
        rep.ch = calinski_harabasz(x, lab);
        rep.db = davies_bouldin(x, lab);
    } else {
        rep.notes.push_back("CH and DB are undefined for fewer than 2 clusters");
    }
    rep.notes.push_back("DB uses the mean member-to-centroid distance as cluster spread");

    if (truth) {
        std::vector<std::int32_t> p, t;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= 0 && (*truth)[i] > 0) {
                p.push_back(labels[i]);
                t.push_back((*truth)[i]);
            }
        rep.labelled_points = p.size();
        if (!p.empty()) {
            rep.f1 = f1_matched(p, t);
            rep.nmi = nmi(p, t);
            rep.ari = ari(p, t);
        } else {
            rep.notes.push_back("no labelled pixels overlap the clustered pixels");
        }
        rep.notes.push_back("F1: optimal one-to-one cluster/class matching (overlap ties go to the higher summed F1), macro-averaged over classes");
        rep.notes.push_back("NMI: mutual information over the arithmetic mean of entropies");
    }
    return rep;
}

}  // namespace gypsum
