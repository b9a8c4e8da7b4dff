#include "doctest.h"

#include <cmath>

#include "ftl/neuralnet.hpp"
#include "ftl/parallel.hpp"
#include "ftl/reference.hpp"
#include "ftl/synth.hpp"

using namespace ftl;

namespace {

ComboNetConfig small_config() {
    ComboNetConfig cfg;
    cfg.input_dim = 8;
    cfg.stem_channels = 4;
    cfg.residual_blocks = 1;
    cfg.kernel_size = 3;
    cfg.dense_hidden = {16};
    cfg.n_classes = 3;
    cfg.init_seed = 2024;
    return cfg;
}

Batch random_batch(std::size_t rows, std::size_t d, std::size_t n_classes,
                   std::uint64_t seed) {
    Rng rng(seed);
    Batch b;
    b.features = Matrix(rows, d);
    for (auto& v : b.features.data) v = rng.uniform(-1.0, 1.0);
    b.labels.resize(rows);
    for (auto& l : b.labels) l = int(rng.below(n_classes));
    return b;
}

double max_rel_error(const GradientSet& analytic, const GradientSet& numeric) {
    double worst = 0.0;
    for (std::size_t b = 0; b < analytic.blocks.size(); ++b) {
        for (std::size_t i = 0; i < analytic.blocks[b].weights.size(); ++i) {
            const double a = analytic.blocks[b].weights[i];
            const double n = numeric.blocks[b].weights[i];
            worst = std::max(worst, std::fabs(a - n) / (std::fabs(a) + 1e-8));
        }
        for (std::size_t i = 0; i < analytic.blocks[b].bias.size(); ++i) {
            const double a = analytic.blocks[b].bias[i];
            const double n = numeric.blocks[b].bias[i];
            worst = std::max(worst, std::fabs(a - n) / (std::fabs(a) + 1e-8));
        }
    }
    return worst;
}

} // namespace

TEST_CASE("init_model is deterministic and seed-sensitive") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights a = init_model(cfg);
    const ModelWeights b = init_model(cfg);
    CHECK(serialize_weights(a) == serialize_weights(b));

    ComboNetConfig other = cfg;
    other.init_seed = 1;
    CHECK(serialize_weights(init_model(other)) != serialize_weights(a));
    for (const auto& blk : a.blocks)
        for (double v : blk.bias) CHECK(v == 0.0);
}

TEST_CASE("minimal architecture is stem plus one dense output") {
    ComboNetConfig cfg;
    cfg.input_dim = 5;
    cfg.stem_channels = 6;
    cfg.residual_blocks = 0;
    cfg.kernel_size = 3;
    cfg.dense_hidden = {};
    cfg.n_classes = 4;
    const ModelWeights w = init_model(cfg);
    REQUIRE(w.blocks.size() == 2);
    CHECK(w.blocks[1].kind == LayerKind::dense);
    CHECK(w.blocks[1].weight_shape == std::vector<std::size_t>{6, 4});

    const Architecture arch = derive_architecture(w);
    CHECK(arch.stem_channels == 6);
    CHECK(arch.residual_blocks == 0);
    CHECK(arch.n_classes == 4);
}

TEST_CASE("fresh models produce finite logits across seeds") {
    ComboNetConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        cfg.init_seed = seed;
        const ModelWeights w = init_model(cfg);
        const Batch batch = random_batch(4, cfg.input_dim, cfg.n_classes, seed ^ 0xABC);
        const Matrix logits = forward(w, batch);
        for (double v : logits.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("zero weights give uniform softmax") {
    ComboNetConfig cfg = small_config();
    ModelWeights w = init_model(cfg);
    for (auto& blk : w.blocks) {
        std::fill(blk.weights.begin(), blk.weights.end(), 0.0);
        std::fill(blk.bias.begin(), blk.bias.end(), 0.0);
    }
    const Batch batch = random_batch(5, cfg.input_dim, cfg.n_classes, 9);
    const Matrix logits = forward(w, batch);
    for (double v : logits.data) CHECK(v == 0.0);
    const Matrix probs = softmax(logits);
    for (double p : probs.data) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("identical rows produce identical logit rows") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    Batch batch = random_batch(1, cfg.input_dim, cfg.n_classes, 33);
    Batch dup;
    dup.features = Matrix(3, cfg.input_dim);
    for (std::size_t r = 0; r < 3; ++r)
        std::copy(batch.features.row(0), batch.features.row(0) + cfg.input_dim,
                  dup.features.row(r));
    dup.labels = {0, 0, 0};
    const Matrix logits = forward(w, dup);
    for (std::size_t r = 1; r < 3; ++r)
        for (std::size_t c = 0; c < logits.cols; ++c)
            CHECK(logits(r, c) == logits(0, c));
}

TEST_CASE("doubling the output block doubles the logits") {
    const ComboNetConfig cfg = small_config();
    ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(4, cfg.input_dim, cfg.n_classes, 77);
    const Matrix base = forward(w, batch);

    auto& out_blk = w.blocks.back();
    for (auto& v : out_blk.weights) v *= 2.0;
    for (auto& v : out_blk.bias) v *= 2.0;
    const Matrix doubled = forward(w, batch);
    for (std::size_t i = 0; i < base.data.size(); ++i)
        CHECK(doubled.data[i] == doctest::Approx(2.0 * base.data[i]).epsilon(1e-12));
}

TEST_CASE("residual block with zero convs is identity-then-relu") {
    ComboNetConfig cfg = small_config();
    cfg.residual_blocks = 1;
    cfg.dense_hidden = {};
    ModelWeights w = init_model(cfg);
    // zero both conv blocks of the residual unit
    for (std::size_t b = 1; b <= 2; ++b) {
        std::fill(w.blocks[b].weights.begin(), w.blocks[b].weights.end(), 0.0);
        std::fill(w.blocks[b].bias.begin(), w.blocks[b].bias.end(), 0.0);
    }
    const Batch batch = random_batch(3, cfg.input_dim, cfg.n_classes, 5);
    ForwardCache cache;
    forward(w, batch, cache);
    // stem output is non-negative, so the block must pass it through intact
    for (std::size_t i = 0; i < cache.stem_out.data.size(); ++i)
        CHECK(cache.res_block_out[0].data[i] == cache.stem_out.data[i]);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    Matrix logits(2, 4, 0.7); // constant rows; softmax is uniform
    const LossGrad lg = cross_entropy_loss(logits, {1, 3});
    CHECK(lg.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy vanishes with a huge correct-logit margin") {
    Matrix logits(1, 3);
    logits(0, 0) = 200.0;
    logits(0, 1) = -200.0;
    logits(0, 2) = -200.0;
    const LossGrad lg = cross_entropy_loss(logits, {0});
    CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lg.loss >= 0.0);
}

TEST_CASE("cross entropy matches the high-precision reference") {
    Rng rng(314);
    Matrix logits(3, 5);
    for (auto& v : logits.data) v = rng.uniform(-4.0, 4.0);
    const std::vector<int> labels = {2, 0, 4};
    const LossGrad lg = cross_entropy_loss(logits, labels);
    CHECK(lg.loss == doctest::Approx(ref::cross_entropy(logits, labels)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(99);
    Matrix logits(20, 6);
    for (auto& v : logits.data) v = rng.uniform(-30.0, 30.0);
    const Matrix probs = softmax(logits);
    for (std::size_t r = 0; r < probs.rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) sum += probs(r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("zero dlogits give an all-zero gradient set") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(4, cfg.input_dim, cfg.n_classes, 3);
    ForwardCache cache;
    forward(w, batch, cache);
    const GradientSet g = backward(w, cache, Matrix(4, cfg.n_classes, 0.0));
    for (const auto& blk : g.blocks) {
        for (double v : blk.weights) CHECK(v == 0.0);
        for (double v : blk.bias) CHECK(v == 0.0);
    }
}

// the gradient oracle: every parameter against central finite differences.
// The instance is chosen so no relu pre-activation sits within the secant
// width of zero; a kink inside ±h makes the difference quotient meaningless
// for that parameter, not the gradient wrong.
TEST_CASE("analytic gradients match finite differences") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(4, cfg.input_dim, cfg.n_classes, 1016);

    ForwardCache cache;
    forward(w, batch, cache);
    double min_pre = 1e9;
    auto scan = [&](const Matrix& m) {
        for (double v : m.data) min_pre = std::min(min_pre, std::fabs(v));
    };
    scan(cache.stem_pre);
    for (const auto& m : cache.res_conv1_pre) scan(m);
    for (const auto& m : cache.res_block_pre) scan(m);
    for (const auto& m : cache.dense_pre) scan(m);
    REQUIRE(min_pre > 1e-3); // the instance is well-conditioned for h = 1e-4

    const LossAndGradient lg = loss_and_gradient(w, batch);
    const GradientSet fd = ref::finite_difference_gradient(w, batch, 1e-4);
    CHECK(max_rel_error(lg.grads, fd) < 1e-4);
}

TEST_CASE("batch gradient is the mean of single-row gradients") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(2, cfg.input_dim, cfg.n_classes, 88);

    const LossAndGradient both = loss_and_gradient(w, batch);

    Batch row0{Matrix(1, cfg.input_dim), {batch.labels[0]}};
    Batch row1{Matrix(1, cfg.input_dim), {batch.labels[1]}};
    std::copy(batch.features.row(0), batch.features.row(0) + cfg.input_dim,
              row0.features.row(0));
    std::copy(batch.features.row(1), batch.features.row(1) + cfg.input_dim,
              row1.features.row(0));
    const GradientSet g0 = loss_and_gradient(w, row0).grads;
    const GradientSet g1 = loss_and_gradient(w, row1).grads;

    for (std::size_t b = 0; b < both.grads.blocks.size(); ++b)
        for (std::size_t i = 0; i < both.grads.blocks[b].weights.size(); ++i) {
            const double mean =
                0.5 * (g0.blocks[b].weights[i] + g1.blocks[b].weights[i]);
            CHECK(both.grads.blocks[b].weights[i] == doctest::Approx(mean).epsilon(1e-10));
        }
}

TEST_CASE("sgd_step applies w - lr*g and leaves inputs untouched") {
    ComboNetConfig cfg;
    cfg.input_dim = 2;
    cfg.stem_channels = 1;
    cfg.residual_blocks = 0;
    cfg.kernel_size = 1;
    cfg.dense_hidden = {};
    cfg.n_classes = 2;
    ModelWeights w = init_model(cfg);
    w.blocks[0].weights = {1.0};
    GradientSet g = zero_gradients_like(w);
    g.blocks[0].weights = {0.5};

    const ModelWeights stepped = sgd_step(w, g, 0.1);
    CHECK(stepped.blocks[0].weights[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(w.blocks[0].weights[0] == 1.0);

    const ModelWeights fixed = sgd_step(w, zero_gradients_like(w), 0.1);
    CHECK(serialize_weights(fixed) == serialize_weights(w));
}

TEST_CASE("a small sgd step decreases the loss") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(16, cfg.input_dim, cfg.n_classes, 55);
    const LossAndGradient lg = loss_and_gradient(w, batch);
    const ModelWeights stepped = sgd_step(w, lg.grads, 1e-3);
    CHECK(mean_loss(stepped, batch) <= lg.loss);
}

TEST_CASE("train_epochs: zero epochs is the identity") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Dataset blobs = make_blobs(20, cfg.input_dim, cfg.n_classes, 7);
    const TrainResult r = train_epochs(w, blobs, {0, 8, 0.1, 1});
    CHECK(serialize_weights(r.weights) == serialize_weights(w));
    CHECK(r.epoch_losses.empty());
}

TEST_CASE("train_epochs is deterministic and learns separable blobs") {
    ComboNetConfig cfg;
    cfg.input_dim = 2;
    cfg.stem_channels = 8;
    cfg.residual_blocks = 1;
    cfg.kernel_size = 3;
    cfg.dense_hidden = {16};
    cfg.n_classes = 2;
    cfg.init_seed = 5;
    const Dataset blobs = make_blobs(80, 2, 2, 42, 4.0, 0.5);

    const TrainParams params{20, 16, 0.1, 99};
    const TrainResult a = train_epochs(init_model(cfg), blobs, params);
    const TrainResult b = train_epochs(init_model(cfg), blobs, params);
    CHECK(serialize_weights(a.weights) == serialize_weights(b.weights));

    const std::vector<int> pred = predict_classes(a.weights, blobs.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == blobs.labels[i]) correct++;
    CHECK(double(correct) / double(pred.size()) == doctest::Approx(1.0));
}

TEST_CASE("train_epochs warns and survives oversized batches") {
    const ComboNetConfig cfg = small_config();
    const Dataset blobs = make_blobs(10, cfg.input_dim, cfg.n_classes, 3);
    const TrainResult r = train_epochs(init_model(cfg), blobs, {1, 500, 0.05, 4});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.epoch_losses.size() == 1);
}

TEST_CASE("predict_classes takes the argmax with ties toward class 0") {
    ComboNetConfig cfg;
    cfg.input_dim = 2;
    cfg.stem_channels = 1;
    cfg.residual_blocks = 0;
    cfg.kernel_size = 1;
    cfg.dense_hidden = {};
    cfg.n_classes = 2;
    ModelWeights w = init_model(cfg);
    // zero network: all logits tie at the bias
    std::fill(w.blocks[0].weights.begin(), w.blocks[0].weights.end(), 0.0);
    std::fill(w.blocks[1].weights.begin(), w.blocks[1].weights.end(), 0.0);
    Matrix x(3, 2, 0.5);
    const std::vector<int> pred = predict_classes(w, x);
    for (int p : pred) CHECK(p == 0);

    // a clear winner
    w.blocks[1].bias = {0.1, 0.9};
    for (int p : predict_classes(w, x)) CHECK(p == 1);
}

TEST_CASE("argmax is invariant under positive rescaling and shifts") {
    const ComboNetConfig cfg = small_config();
    ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(32, cfg.input_dim, cfg.n_classes, 31);
    const std::vector<int> base = predict_classes(w, batch.features);

    // scaling the output layer rescales every logit row positively
    for (auto& v : w.blocks.back().weights) v *= 3.7;
    for (auto& v : w.blocks.back().bias) v *= 3.7;
    CHECK(predict_classes(w, batch.features) == base);

    // adding a constant to every class bias shifts each row uniformly
    for (auto& v : w.blocks.back().bias) v += 11.0;
    CHECK(predict_classes(w, batch.features) == base);
}

TEST_CASE("forward rejects a batch of the wrong width") {
    const ComboNetConfig cfg = small_config();
    const ModelWeights w = init_model(cfg);
    const Batch bad = random_batch(2, cfg.input_dim + 1, cfg.n_classes, 1);
    CHECK_THROWS_AS(forward(w, bad), Error);
}

TEST_CASE("parallel and serial forward/backward agree bit for bit") {
    ComboNetConfig cfg = small_config();
    cfg.input_dim = 12;
    const ModelWeights w = init_model(cfg);
    const Batch batch = random_batch(300, cfg.input_dim, cfg.n_classes, 17);

    set_parallel_enabled(false);
    const LossAndGradient serial = loss_and_gradient(w, batch);
    set_parallel_enabled(true);
    const LossAndGradient parallel = loss_and_gradient(w, batch);

    CHECK(serial.loss == parallel.loss);
    for (std::size_t b = 0; b < serial.grads.blocks.size(); ++b) {
        CHECK(serial.grads.blocks[b].weights == parallel.grads.blocks[b].weights);
        CHECK(serial.grads.blocks[b].bias == parallel.grads.blocks[b].bias);
    }
}

// --------------------------------------------------------------------------
// serialization

TEST_CASE("serialize/deserialize round-trips bit-exactly") {
    ComboNetConfig cfg = small_config();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        cfg.init_seed = seed;
        const ModelWeights w = init_model(cfg);
        const auto bytes = serialize_weights(w);
        const ModelWeights back = deserialize_weights(bytes);
        CHECK(back.fingerprint == w.fingerprint);
        CHECK(serialize_weights(back) == bytes);
    }
}

TEST_CASE("serialized size matches the documented layout") {
    const ModelWeights w = init_model(small_config());
    const auto bytes = serialize_weights(w);
    CHECK(bytes.size() == serialized_size(w));

    // header + per-block sums, written out by hand
    std::size_t expect = 4 + 2 + 8 + 4;
    for (const auto& blk : w.blocks) {
        expect += 2 + blk.layer_id.size() + 1 + 1;
        expect += 4 * blk.weight_shape.size();
        expect += 8 * blk.weights.size();
        expect += 4 + 8 * blk.bias.size();
    }
    CHECK(bytes.size() == expect);
}

TEST_CASE("corrupted magic bytes raise a version error") {
    auto bytes = serialize_weights(init_model(small_config()));
    bytes[0] = 'X';
    try {
        deserialize_weights(bytes);
        FAIL("expected a version error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::version_mismatch);
    }
}

TEST_CASE("unsupported version is rejected") {
    auto bytes = serialize_weights(init_model(small_config()));
    bytes[4] = 0x7F;
    try {
        deserialize_weights(bytes);
        FAIL("expected a version error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::version_mismatch);
    }
}

TEST_CASE("truncation is detected") {
    const auto bytes = serialize_weights(init_model(small_config()));
    for (std::size_t cut : {std::size_t(3), std::size_t(13), bytes.size() / 2,
                            bytes.size() - 1}) {
        std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + long(cut));
        CHECK_THROWS_AS(deserialize_weights(trunc), Error);
    }
}

TEST_CASE("fingerprint mismatch is detected on load") {
    const ModelWeights w = init_model(small_config());
    const auto bytes = serialize_weights(w);
    CHECK_NOTHROW(deserialize_weights(bytes, w.fingerprint));
    try {
        deserialize_weights(bytes, w.fingerprint ^ 1);
        FAIL("expected a fingerprint error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::fingerprint_mismatch);
    }
}
