#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftl/common.hpp"
#include "ftl/dataset_io.hpp"

namespace ftl {

struct ComboNetConfig {
    std::size_t input_dim = 0;
    std::size_t stem_channels = 8;
    std::size_t residual_blocks = 2;
    std::size_t kernel_size = 3; // odd
    std::vector<std::size_t> dense_hidden = {32};
    std::size_t n_classes = 2;
    std::uint64_t init_seed = 0;

    void validate() const;

    // Architecture fingerprint (input_dim, stem, blocks, kernel, head, classes).
    // init_seed is provenance, not architecture, and is excluded so that two
    // models of the same shape are interchangeable weight containers.
    std::uint64_t fingerprint() const;
};

enum class LayerKind : std::uint8_t { conv = 0, dense = 1 };

// One parameter block. Conv weights are [out_ch, in_ch, k]; dense weights are
// [in, out]. Flat row-major storage.
struct ParamBlock {
    std::string layer_id;
    LayerKind kind = LayerKind::dense;
    std::vector<std::size_t> weight_shape;
    std::vector<double> weights;
    std::vector<double> bias;

    std::size_t weight_count() const {
        std::size_t n = 1;
        for (std::size_t s : weight_shape) n *= s;
        return weight_shape.empty() ? 0 : n;
    }
};

struct ModelWeights {
    std::vector<ParamBlock> blocks;
    std::uint64_t fingerprint = 0;
};

// Parameter-shaped gradients plus the sample count they were averaged over.
struct GradientSet {
    std::vector<ParamBlock> blocks;
    std::size_t sample_count = 0;
};

struct Batch {
    Matrix features; // b x d
    std::vector<int> labels;
};

// Layer layout recovered from the ordered blocks of a ModelWeights.
struct Architecture {
    std::size_t stem_channels = 0;
    std::size_t residual_blocks = 0;
    std::size_t kernel_size = 0;
    std::vector<std::size_t> dense_hidden;
    std::size_t n_classes = 0;

    std::size_t stem_index() const { return 0; }
    std::size_t res_conv1_index(std::size_t i) const { return 1 + 2 * i; }
    std::size_t res_conv2_index(std::size_t i) const { return 2 + 2 * i; }
    std::size_t dense_index(std::size_t j) const { return 1 + 2 * residual_blocks + j; }
    std::size_t out_index() const { return 1 + 2 * residual_blocks + dense_hidden.size(); }
};

Architecture derive_architecture(const ModelWeights& weights);

// Fingerprint the weights would carry if they were built for input width d.
// Comparing it against the embedded fingerprint detects dimension mismatches.
std::uint64_t architecture_fingerprint(const ModelWeights& weights, std::size_t input_dim);

// Per-layer activations of a whole batch; consumed by backward.
struct ForwardCache {
    std::size_t rows = 0;
    std::size_t input_dim = 0;
    Matrix input;    // b x d
    Matrix stem_pre; // b x (C*d)
    Matrix stem_out;
    std::vector<Matrix> res_conv1_pre; // per block, b x (C*d)
    std::vector<Matrix> res_conv1_out;
    std::vector<Matrix> res_conv2_pre;
    std::vector<Matrix> res_block_pre; // conv2 output + skip, before the final relu
    std::vector<Matrix> res_block_out;
    Matrix pooled; // b x C
    std::vector<Matrix> dense_pre; // per hidden layer, b x h
    std::vector<Matrix> dense_out;
    Matrix logits; // b x n_classes
};

// He-uniform weights, zero biases, fully determined by init_seed.
ModelWeights init_model(const ComboNetConfig& config);

// Feature vector as a 1-channel sequence -> stem conv + relu -> residual
// blocks -> global average pool -> dense head. Rows are independent, so the
// batch loop parallelizes without affecting output bytes.
Matrix forward(const ModelWeights& weights, const Batch& batch, ForwardCache& cache);
Matrix forward(const ModelWeights& weights, const Batch& batch);

Matrix softmax(const Matrix& logits);

struct LossGrad {
    double loss = 0.0; // mean over the batch
    Matrix dlogits;    // d(mean loss)/d(logits), already divided by batch size
};

// Softmax cross entropy, stabilized by max subtraction (log-sum-exp form).
LossGrad cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels);

// Exact reverse-mode gradients of the scalar that produced dlogits. Row
// contributions are accumulated in fixed-size row blocks and the block
// partials are combined in block order, so thread count never changes the
// result.
GradientSet backward(const ModelWeights& weights, const ForwardCache& cache,
                     const Matrix& dlogits);

GradientSet zero_gradients_like(const ModelWeights& weights);

// w' = w - lr * g; value semantics, inputs untouched.
ModelWeights sgd_step(const ModelWeights& weights, const GradientSet& grads, double lr);

struct LossAndGradient {
    double loss = 0.0;
    GradientSet grads;
};

// Mean loss and mean gradient over one batch (forward + backward fused).
LossAndGradient loss_and_gradient(const ModelWeights& weights, const Batch& batch);

double mean_loss(const ModelWeights& weights, const Batch& batch);

struct TrainParams {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t shuffle_seed = 0;
};

struct TrainResult {
    ModelWeights weights;
    std::vector<double> epoch_losses; // mean training loss per epoch
    std::vector<std::string> warnings;
};

// Seeded-shuffle mini-batch SGD; a pure function of (weights, data, params).
TrainResult train_epochs(const ModelWeights& weights, const Dataset& data,
                         const TrainParams& params);

// Argmax per row; ties break toward the lowest class index.
std::vector<int> predict_classes(const ModelWeights& weights, const Matrix& features);

double max_abs_weight_delta(const ModelWeights& a, const ModelWeights& b);

// --------------------------------------------------------------------------
// Weight wire format (version 1, little endian):
//   magic "FTLW" | u16 version | u64 fingerprint | u32 block_count
//   per block: u16 id_len | id bytes | u8 kind | u8 ndims | u32 dims[ndims]
//              | f64 weights[prod(dims)] | u32 bias_len | f64 bias[bias_len]
inline constexpr std::uint16_t kWeightsFormatVersion = 1;

std::vector<std::uint8_t> serialize_weights(const ModelWeights& weights);
ModelWeights deserialize_weights(const std::vector<std::uint8_t>& bytes);
// Additionally checks the embedded fingerprint against an expected one.
ModelWeights deserialize_weights(const std::vector<std::uint8_t>& bytes,
                                 std::uint64_t expected_fingerprint);

void save_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights(const std::string& path);

// Exact on-disk size of a serialized model, per the format above.
std::size_t serialized_size(const ModelWeights& weights);

} // namespace ftl
