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

// Per-image autoencoder trained under a spectral-angle reconstruction loss.
//
// Layout: w -> h1 -> h2 -> d (encoder) and d -> h2 -> h1 -> w (decoder).
// Hidden layers use ReLU; the embedding and reconstruction layers are affine.

#pragma once

#include "gypsum/hsi.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gypsum {

struct AeConfig {
    std::size_t input_dim = 0;
    std::size_t embed_dim = 0;
    std::array<std::size_t, 2> hidden{128, 64};
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double min_rel_improvement = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;

    bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

inline constexpr std::size_t kAeLayers = 6;
inline constexpr std::size_t kEmbeddingLayer = 2;  // output of this layer is z

struct AdamState {
    std::array<DenseLayer, kAeLayers> first;
    std::array<DenseLayer, kAeLayers> second;
    std::uint64_t step = 0;

    bool operator==(const AdamState&) const = default;
};

struct AeModel {
    std::array<DenseLayer, kAeLayers> layers;
    AdamState adam;

    std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
    std::size_t embed_dim() const { return static_cast<std::size_t>(layers[kEmbeddingLayer].weight.rows()); }
    bool operator==(const AeModel&) const = default;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, zeroed Adam state.
AeModel init_model(const AeConfig& config);

/// Every layer's ReLU flag: true for the four hidden layers.
bool layer_has_relu(std::size_t layer);

struct ForwardResult {
    Eigen::VectorXd z;
    Eigen::VectorXd reconstruction;
};

ForwardResult forward(const AeModel& model, std::span<const double> x);

/// Cosine bounds applied before arccos so the gradient stays finite.
inline constexpr double kCosineClamp = 1e-7;
inline constexpr double kMinReconstructionNorm = 1e-12;

/// Spectral angle used as the training loss, with the cosine clamped to
/// [−1 + 1e-7, 1 − 1e-7]. Loss floor is acos(1 − 1e-7) ≈ 4.47e-4 rad.
double sa_loss(std::span<const double> x, std::span<const double> x_hat);

/// d sa_loss / d x_hat for one sample. Zero where the clamp is active or the
/// reconstruction norm is below 1e-12.
Eigen::VectorXd sa_loss_gradient(std::span<const double> x, std::span<const double> x_hat);

struct Gradients {
    std::array<DenseLayer, kAeLayers> layers;
    double loss = 0.0;  // mean spectral angle over the batch
};

/// Mean loss over the rows of `batch` and its exact gradient for every
/// weight and bias. ReLU subgradient at zero is zero.
Gradients backward(const AeModel& model, const RowMatrix& batch);

/// Mean loss over the rows of `batch`.
double batch_loss(const AeModel& model, const RowMatrix& batch);

struct TrainResult {
    AeModel model;                     // best epoch
    std::vector<double> epoch_loss;    // mean loss per epoch
    std::vector<double> best_so_far;   // running minimum of epoch_loss
    std::size_t best_epoch = 0;
};

/// Minibatch Adam with deterministic shuffling from `config.seed`. Stops
/// when the best epoch loss has not improved by `min_rel_improvement` for
/// `patience` epochs, or at `max_epochs`. Throws Numerical on NaN loss.
TrainResult train(const RowMatrix& spectra, const AeConfig& config);

struct Embedding {
    RowMatrix values;  // p x d
    std::vector<PixelIndex> origin;
};

RowMatrix encode(const AeModel& model, const RowMatrix& spectra);
Embedding encode_all(const AeModel& model, const PixelMatrix& matrix);

/// Versioned little-endian binary checkpoint (shapes, weights, Adam state).
void save_model(const AeModel& model, const std::filesystem::path& path);
AeModel load_model(const std::filesystem::path& path);

}  // namespace gypsum
