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
#include "gypsum/synth.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

using namespace gypsum;

namespace {

AeConfig small_config(std::uint64_t seed) {
    AeConfig c;
    c.input_dim = 12;
    c.embed_dim = 3;
    c.hidden = {8, 6};
    c.seed = seed;
    return c;
}

RowMatrix positive_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    return test::random_matrix(rows, cols, seed).cwiseAbs().array() + 0.05;
}

// Square pass-through network of width n.
AeModel identity_model(Eigen::Index n) {
    AeModel m;
    for (auto& l : m.layers) {
        l.weight = Eigen::MatrixXd::Identity(n, n);
        l.bias = Eigen::VectorXd::Zero(n);
    }
    return m;
}

std::span<const double> span_of(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Spectral angle floor induced by clamping the cosine at 1 - 1e-7.
const double kLossFloor = std::acos(1.0 - 1e-7);

}  // namespace

TEST_CASE("zero network maps everything to zero") {
    auto cfg = small_config(1);
    AeModel m = init_model(cfg);
    for (auto& l : m.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(12, 0.1, 0.9);
    const auto out = forward(m, span_of(x));
    CHECK(out.z.size() == 3);
    CHECK(out.z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.reconstruction.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pass-through construction reconstructs non-negative inputs") {
    const auto m = identity_model(7);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(7, 0.0, 0.6);
    const auto out = forward(m, span_of(x));
    CHECK(out.reconstruction == x);
    CHECK(out.z == x);
}

TEST_CASE("layer shapes for a full-size configuration") {
    AeConfig cfg;
    cfg.input_dim = 249;
    cfg.embed_dim = 20;
    const auto m = init_model(cfg);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(249, 0.1);
    const auto out = forward(m, span_of(x));
    CHECK(out.z.size() == 20);
    CHECK(out.reconstruction.size() == 249);
    const std::array<Eigen::Index, 7> widths{249, 128, 64, 20, 64, 128, 249};
    for (std::size_t l = 0; l < kAeLayers; ++l) {
        CHECK(m.layers[l].weight.cols() == widths[l]);
        CHECK(m.layers[l].weight.rows() == widths[l + 1]);
        CHECK(m.layers[l].bias.isZero());
        const double bound = std::sqrt(6.0 / static_cast<double>(widths[l]));
        CHECK(m.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
    }
    CHECK(layer_has_relu(0));
    CHECK(layer_has_relu(1));
    CHECK_FALSE(layer_has_relu(2));
    CHECK(layer_has_relu(3));
    CHECK(layer_has_relu(4));
    CHECK_FALSE(layer_has_relu(5));
}

TEST_CASE("spectral-angle loss") {
    const std::vector<double> x{0.2, 0.5, 0.1}, x3{0.6, 1.5, 0.3};
    CHECK(sa_loss(x, x) == doctest::Approx(kLossFloor).epsilon(1e-6));
    CHECK(kLossFloor < 4.5e-4);
    CHECK(sa_loss(x, x3) == doctest::Approx(kLossFloor).epsilon(1e-6));
    CHECK(std::abs(sa_loss(std::vector<double>{1, 0}, std::vector<double>{1, 1}) - std::numbers::pi / 4) < 1e-15);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0), c(0.1, 10.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(9), b(9), cb(9);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const double s = c(rng);
        for (std::size_t i = 0; i < 9; ++i) cb[i] = s * b[i];
        CHECK(std::abs(sa_loss(a, b) - sa_loss(a, cb)) < 1e-12);
    }
}

TEST_CASE("loss gradient with respect to the reconstruction ignores input scale") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(10), x2(10), h(10);
        for (auto& v : x) v = u(rng);
        for (auto& v : h) v = u(rng);
        for (std::size_t i = 0; i < 10; ++i) x2[i] = 2.0 * x[i];
        CHECK(std::abs(sa_loss(x, h) - sa_loss(x2, h)) < 1e-14);
        CHECK((sa_loss_gradient(x, h) - sa_loss_gradient(x2, h)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gradient at perfect reconstruction is finite and zero") {
    auto m = identity_model(6);
    const RowMatrix batch = positive_batch(4, 6, 3);
    const auto g = backward(m, batch);
    CHECK(std::isfinite(g.loss));
    for (const auto& l : g.layers) {
        CHECK(l.weight.allFinite());
        CHECK(l.bias.allFinite());
        CHECK(l.weight.cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(l.bias.cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("tiny reconstructions are safeguarded") {
    const std::vector<double> x{1.0, 2.0}, h{1e-14, 0.0};
    CHECK(std::isfinite(sa_loss(x, h)));
    CHECK(sa_loss_gradient(x, h).isZero());
}

TEST_CASE("analytic gradients match central differences") {
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 25 && seed < 200; ++seed) {
        const auto model = init_model(small_config(seed));
        const RowMatrix batch = positive_batch(4, 12, 1000 + seed);
        const auto r = test::check_gradients(model, batch);
        if (!r.eligible) continue;
        ++checked;
        CHECK(r.max_rel_error < 1e-5);
    }
    CHECK(checked >= 20);
}

TEST_CASE("training converges on a noiseless three-endmember scene") {
    SynthSpec spec;
    spec.endmembers = 3;
    spec.snr_db = kNoiseless;
    spec.seed = 1;
    const auto scene = generate(spec);
    const auto m = flatten(scene.cube);
    AeConfig cfg;
    cfg.input_dim = 50;
    cfg.embed_dim = 3;
    cfg.seed = 1;
    const auto res = train(m.spectra, cfg);
    CHECK(res.epoch_loss[res.best_epoch] < 0.01);
    CHECK(res.best_so_far.size() == res.epoch_loss.size());
    for (std::size_t e = 1; e < res.best_so_far.size(); ++e) CHECK(res.best_so_far[e] <= res.best_so_far[e - 1]);
    CHECK(res.epoch_loss.size() <= cfg.max_epochs);
    CHECK(batch_loss(res.model, m.spectra) == doctest::Approx(res.epoch_loss[res.best_epoch]).epsilon(0.2));
}

TEST_CASE("training is bit-exact under a seed") {
    const RowMatrix data = positive_batch(600, 12, 9);
    auto cfg = small_config(5);
    cfg.max_epochs = 4;
    cfg.batch_size = 64;
    const auto a = train(data, cfg), b = train(data, cfg);
    CHECK(a.model == b.model);
    CHECK(a.epoch_loss == b.epoch_loss);
    cfg.seed = 6;
    CHECK_FALSE(train(data, cfg).model == a.model);
}

TEST_CASE("training errors") {
    auto cfg = small_config(1);
    CHECK_THROWS_AS(train(positive_batch(100, 12, 1), cfg), Error);  // fewer pixels than one batch
    RowMatrix bad = positive_batch(300, 12, 2);
    bad(17, 3) = NAN;
    try {
        train(bad, cfg);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numerical);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("configuration bounds") {
    auto cfg = small_config(1);
    cfg.embed_dim = 12;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config(1);
    cfg.hidden = {8, 2};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config(1);
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(small_config(1).validate());
}

TEST_CASE("encoding") {
    const auto model = init_model(small_config(3));
    PixelMatrix one;
    one.raster_rows = 1;
    one.raster_cols = 1;
    one.spectra = positive_batch(1, 12, 4);
    one.origin = {{0, 0}};
    CHECK(encode_all(model, one).values.rows() == 1);

    RowMatrix dup(5, 12);
    for (Eigen::Index i = 0; i < 5; ++i) dup.row(i) = one.spectra.row(0);
    const auto z = encode(model, dup);
    CHECK(z.rows() == 5);
    CHECK(z.cols() == 3);
    for (Eigen::Index i = 1; i < 5; ++i) CHECK(z.row(i) == z.row(0));
    const Eigen::VectorXd x = one.spectra.row(0).transpose();
    CHECK(z.row(0).transpose() == forward(model, span_of(x)).z);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    test::TempDir dir("ae");
    const RowMatrix data = positive_batch(300, 12, 9);
    auto cfg = small_config(5);
    cfg.max_epochs = 2;
    cfg.batch_size = 100;
    const auto trained = train(data, cfg).model;
    save_model(trained, dir / "m.gae");
    CHECK(load_model(dir / "m.gae") == trained);

    std::ofstream(dir / "junk.gae") << "not a model";
    CHECK_THROWS_AS(load_model(dir / "junk.gae"), Error);
    CHECK_THROWS_AS(load_model(dir / "missing.gae"), Error);
}
