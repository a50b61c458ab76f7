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

#include "gypsum/autoencoder.hpp"

#include "gypsum/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace gypsum {

namespace {

using Matrix = Eigen::MatrixXd;

// Column-per-sample activations for one batch.
struct Activations {
    std::array<Matrix, kAeLayers> pre;   // affine outputs
    std::array<Matrix, kAeLayers> post;  // after ReLU where applicable
};

Activations run_forward(const AeModel& model, const Matrix& input) {
    Activations act;
    const Matrix* in = &input;
    for (std::size_t l = 0; l < kAeLayers; ++l) {
        const auto& layer = model.layers[l];
        act.pre[l] = layer.weight * *in;
        act.pre[l].colwise() += layer.bias;
        act.post[l] = layer_has_relu(l) ? Matrix(act.pre[l].cwiseMax(0.0)) : act.pre[l];
        in = &act.post[l];
    }
    return act;
}

struct AngleTerm {
    double loss;
    double dloss_dcos;  // zero when clamped or degenerate
    double cosine;
    double norm_x;
    double norm_hat;
};

AngleTerm angle_term(const double* x, const double* h, std::size_t n) {
    double dot = 0.0, nx = 0.0, nh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += x[i] * h[i];
        nx += x[i] * x[i];
        nh += h[i] * h[i];
    }
    nx = std::sqrt(nx);
    nh = std::sqrt(nh);
    if (nh < kMinReconstructionNorm || nx <= 0.0) return {std::numbers::pi / 2.0, 0.0, 0.0, nx, nh};
    const double c = dot / (nx * nh);
    const double lo = -1.0 + kCosineClamp, hi = 1.0 - kCosineClamp;
    if (c > hi || c < lo) return {std::acos(std::clamp(c, lo, hi)), 0.0, c, nx, nh};
    return {std::acos(c), -1.0 / std::sqrt(1.0 - c * c), c, nx, nh};
}

DenseLayer zeros_like(const DenseLayer& l) {
    return {Matrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())};
}

Matrix to_columns(const RowMatrix& rows) { return rows.transpose(); }

void adam_update(AeModel& model, const Gradients& g, const AeConfig& cfg) {
    auto& st = model.adam;
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto step = [&](auto& param, auto& m, auto& v, const auto& grad) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
    };
    for (std::size_t l = 0; l < kAeLayers; ++l) {
        step(model.layers[l].weight, st.first[l].weight, st.second[l].weight, g.layers[l].weight);
        step(model.layers[l].bias, st.first[l].bias, st.second[l].bias, g.layers[l].bias);
    }
}

constexpr char kMagic[8] = {'G', 'Y', 'P', 'S', 'A', 'E', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw_io("truncated autoencoder checkpoint");
    return v;
}

void put_layer(std::ostream& out, const DenseLayer& l) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(l.weight.cols()));
    out.write(reinterpret_cast<const char*>(l.weight.data()), static_cast<std::streamsize>(l.weight.size() * 8));
    out.write(reinterpret_cast<const char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * 8));
}

DenseLayer get_layer(std::istream& in) {
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) throw_io("corrupt autoencoder checkpoint");
    DenseLayer l{Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                 Eigen::VectorXd(static_cast<Eigen::Index>(rows))};
    in.read(reinterpret_cast<char*>(l.weight.data()), static_cast<std::streamsize>(l.weight.size() * 8));
    in.read(reinterpret_cast<char*>(l.bias.data()), static_cast<std::streamsize>(l.bias.size() * 8));
    if (!in) throw_io("truncated autoencoder checkpoint");
    return l;
}

}  // namespace

void AeConfig::validate() const {
    if (input_dim == 0 || embed_dim == 0) throw_config("autoencoder: input and embedding sizes must be positive");
    if (embed_dim >= input_dim)
        throw_config("autoencoder: embedding size " + std::to_string(embed_dim) + " must be below the band count " +
                     std::to_string(input_dim));
    if (hidden[0] < embed_dim || hidden[1] < embed_dim)
        throw_config("autoencoder: hidden widths must be at least the embedding size");
    if (!(learning_rate > 0.0)) throw_config("autoencoder: learning_rate must be positive");
    if (batch_size == 0 || max_epochs == 0) throw_config("autoencoder: batch_size and max_epochs must be positive");
    if (!(min_rel_improvement >= 0.0)) throw_config("autoencoder: min_rel_improvement must be nonnegative");
}

bool layer_has_relu(std::size_t layer) { return layer != kEmbeddingLayer && layer != kAeLayers - 1; }

AeModel init_model(const AeConfig& cfg) {
    cfg.validate();
    const std::array<std::size_t, kAeLayers + 1> dims{cfg.input_dim, cfg.hidden[0], cfg.hidden[1], cfg.embed_dim,
                                                      cfg.hidden[1], cfg.hidden[0], cfg.input_dim};
    std::mt19937_64 rng(cfg.seed);
    AeModel m;
    for (std::size_t l = 0; l < kAeLayers; ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]), out = static_cast<Eigen::Index>(dims[l + 1]);
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseLayer layer{Matrix(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index j = 0; j < in; ++j)
            for (Eigen::Index i = 0; i < out; ++i) layer.weight(i, j) = u(rng);
        m.adam.first[l] = zeros_like(layer);
        m.adam.second[l] = zeros_like(layer);
        m.layers[l] = std::move(layer);
    }
    return m;
}

ForwardResult forward(const AeModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim()) throw_invalid("forward: spectrum length does not match the model");
    const Matrix input = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const auto act = run_forward(model, input);
    return {act.post[kEmbeddingLayer].col(0), act.post[kAeLayers - 1].col(0)};
}

double sa_loss(std::span<const double> x, std::span<const double> x_hat) {
    if (x.size() != x_hat.size()) throw_invalid("sa_loss: length mismatch");
    return angle_term(x.data(), x_hat.data(), x.size()).loss;
}

Eigen::VectorXd sa_loss_gradient(std::span<const double> x, std::span<const double> h) {
    if (x.size() != h.size()) throw_invalid("sa_loss_gradient: length mismatch");
    const auto t = angle_term(x.data(), h.data(), x.size());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.size()));
    if (t.dloss_dcos == 0.0) return g;
    for (std::size_t i = 0; i < x.size(); ++i)
        g(static_cast<Eigen::Index>(i)) =
            t.dloss_dcos * (x[i] / (t.norm_x * t.norm_hat) - t.cosine * h[i] / (t.norm_hat * t.norm_hat));
    return g;
}

double batch_loss(const AeModel& model, const RowMatrix& batch) {
    const Matrix input = to_columns(batch);
    const auto act = run_forward(model, input);
    const Matrix& out = act.post[kAeLayers - 1];
    double total = 0.0;
    for (Eigen::Index s = 0; s < input.cols(); ++s)
        total += angle_term(input.col(s).data(), out.col(s).data(), static_cast<std::size_t>(input.rows())).loss;
    return total / static_cast<double>(input.cols());
}

namespace {

Gradients backward_columns(const AeModel& model, const Matrix& input) {
    const auto act = run_forward(model, input);
    const Matrix& out = act.post[kAeLayers - 1];
    const auto n = input.cols();
    const auto w = static_cast<std::size_t>(input.rows());
    const double inv_n = 1.0 / static_cast<double>(n);

    Gradients g;
    Matrix delta(input.rows(), n);
    double total = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
        const double* x = input.col(s).data();
        const double* h = out.col(s).data();
        const auto t = angle_term(x, h, w);
        total += t.loss;
        for (std::size_t i = 0; i < w; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            delta(ii, s) = t.dloss_dcos == 0.0
                               ? 0.0
                               : inv_n * t.dloss_dcos *
                                     (x[i] / (t.norm_x * t.norm_hat) - t.cosine * h[i] / (t.norm_hat * t.norm_hat));
        }
    }
    g.loss = total * inv_n;

    for (std::size_t l = kAeLayers; l-- > 0;) {
        if (layer_has_relu(l)) delta = delta.cwiseProduct((act.pre[l].array() > 0.0).cast<double>().matrix());
        const Matrix& layer_in = l == 0 ? input : act.post[l - 1];
        g.layers[l].weight = delta * layer_in.transpose();
        g.layers[l].bias = delta.rowwise().sum();
        if (l > 0) delta = model.layers[l].weight.transpose() * delta;
    }
    return g;
}

}  // namespace

Gradients backward(const AeModel& model, const RowMatrix& batch) {
    if (batch.rows() == 0) throw_invalid("backward: empty batch");
    if (static_cast<std::size_t>(batch.cols()) != model.input_dim())
        throw_invalid("backward: spectrum length does not match the model");
    return backward_columns(model, to_columns(batch));
}

TrainResult train(const RowMatrix& spectra, const AeConfig& config) {
    AeConfig cfg = config;
    cfg.input_dim = static_cast<std::size_t>(spectra.cols());
    cfg.validate();
    const auto p = static_cast<std::size_t>(spectra.rows());
    if (p < cfg.batch_size)
        throw_invalid("autoencoder: " + std::to_string(p) + " pixels is fewer than the batch size " +
                      std::to_string(cfg.batch_size));

    AeModel model = init_model(cfg);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const Matrix data = to_columns(spectra);
    std::vector<Eigen::Index> order(p);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult res;
    res.model = model;
    double best = std::numeric_limits<double>::infinity();
    double patience_ref = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    Matrix batch;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t start = 0; start < p; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, p - start);
            batch.resize(data.rows(), static_cast<Eigen::Index>(len));
            for (std::size_t j = 0; j < len; ++j) batch.col(static_cast<Eigen::Index>(j)) = data.col(order[start + j]);
            const Gradients g = backward_columns(model, batch);
            if (!std::isfinite(g.loss))
                throw_numerical("autoencoder training diverged (loss is NaN) at epoch " + std::to_string(epoch));
            total += g.loss * static_cast<double>(len);
            adam_update(model, g, cfg);
        }
        const double loss = total / static_cast<double>(p);
        res.epoch_loss.push_back(loss);
        if (loss < best) {
            best = loss;
            res.model = model;
            res.best_epoch = epoch;
        }
        res.best_so_far.push_back(best);
        if (loss < patience_ref * (1.0 - cfg.min_rel_improvement)) {
            patience_ref = loss;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return res;
}

RowMatrix encode(const AeModel& model, const RowMatrix& spectra) {
    if (static_cast<std::size_t>(spectra.cols()) != model.input_dim())
        throw_invalid("encode: spectrum length does not match the model");
    Matrix h = to_columns(spectra);
    for (std::size_t l = 0; l <= kEmbeddingLayer; ++l) {
        Matrix next = model.layers[l].weight * h;
        next.colwise() += model.layers[l].bias;
        if (layer_has_relu(l)) next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    return h.transpose();
}

Embedding encode_all(const AeModel& model, const PixelMatrix& matrix) {
    return {encode(model, matrix.spectra), matrix.origin};
}

void save_model(const AeModel& model, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open '" + path.string() + "' for writing");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kAeLayers));
    for (const auto& l : model.layers) put_layer(out, l);
    put<std::uint64_t>(out, model.adam.step);
    for (const auto& l : model.adam.first) put_layer(out, l);
    for (const auto& l : model.adam.second) put_layer(out, l);
    if (!out) throw_io("failed writing '" + path.string() + "'");
}

AeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open autoencoder checkpoint '" + path.string() + "'");
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw_io("'" + path.string() + "' is not a checkpoint");
    if (get<std::uint32_t>(in) != kCheckpointVersion) throw_io("unsupported checkpoint version");
    if (get<std::uint32_t>(in) != kAeLayers) throw_io("checkpoint layer count mismatch");
    AeModel m;
    for (auto& l : m.layers) l = get_layer(in);
    m.adam.step = get<std::uint64_t>(in);
    for (auto& l : m.adam.first) l = get_layer(in);
    for (auto& l : m.adam.second) l = get_layer(in);
    for (std::size_t l = 1; l < kAeLayers; ++l)
        if (m.layers[l].weight.cols() != m.layers[l - 1].weight.rows()) throw_io("checkpoint layer shapes do not chain");
    return m;
}

}  // namespace gypsum
