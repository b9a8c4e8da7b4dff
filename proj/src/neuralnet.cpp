#include "ftl/neuralnet.hpp"
#include "ftl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace ftl {

namespace {

// Rows per gradient-accumulation block. Partials are combined in block order,
// which pins the floating-point reduction order for any thread count.
constexpr std::size_t kRowBlock = 64;

std::uint64_t fingerprint_of(std::size_t input_dim, std::size_t stem, std::size_t res,
                             std::size_t kernel, const std::vector<std::size_t>& hidden,
                             std::size_t n_classes) {
    std::vector<std::uint64_t> vals;
    vals.reserve(hidden.size() + 6);
    vals.push_back(input_dim);
    vals.push_back(stem);
    vals.push_back(res);
    vals.push_back(kernel);
    vals.push_back(hidden.size());
    for (std::size_t h : hidden) vals.push_back(h);
    vals.push_back(n_classes);

    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint64_t v : vals) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = (unsigned char)(v >> (8 * i));
        h = fnv1a64(bytes, 8, h);
    }
    return h;
}

void require_congruent(const std::vector<ParamBlock>& a, const std::vector<ParamBlock>& b,
                       const char* what) {
    if (a.size() != b.size())
        throw Error(ErrorCode::dimension_mismatch,
                    std::string(what) + ": block count mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].weight_shape != b[i].weight_shape || a[i].bias.size() != b[i].bias.size())
            throw Error(ErrorCode::dimension_mismatch,
                        std::string(what) + ": shape mismatch in block " + a[i].layer_id);
    }
}

// out[oc][p] = bias[oc] + sum_{ic,j} W[oc][ic][j] * in[ic][p + j - k/2]
void conv_row(const double* in, std::size_t in_ch, std::size_t len, const ParamBlock& blk,
              double* out) {
    const std::size_t out_ch = blk.weight_shape[0];
    const std::size_t k = blk.weight_shape[2];
    const std::size_t off = k / 2;
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        double* dst = out + oc * len;
        for (std::size_t p = 0; p < len; ++p) {
            double acc = blk.bias[oc];
            for (std::size_t ic = 0; ic < in_ch; ++ic) {
                const double* w = &blk.weights[(oc * in_ch + ic) * k];
                const double* src = in + ic * len;
                const std::size_t j_lo = off > p ? off - p : 0;
                const std::size_t j_hi = std::min(k, len + off - p);
                for (std::size_t j = j_lo; j < j_hi; ++j) acc += w[j] * src[p + j - off];
            }
            dst[p] = acc;
        }
    }
}

// Accumulates dW/db for one row; optionally produces din.
void conv_row_backward(const double* in, std::size_t in_ch, std::size_t len,
                       const ParamBlock& blk, const double* dout, double* gw, double* gb,
                       double* din) {
    const std::size_t out_ch = blk.weight_shape[0];
    const std::size_t k = blk.weight_shape[2];
    const std::size_t off = k / 2;
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const double* dslice = dout + oc * len;
        double bacc = 0.0;
        for (std::size_t p = 0; p < len; ++p) bacc += dslice[p];
        gb[oc] += bacc;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            const double* src = in + ic * len;
            double* gwp = gw + (oc * in_ch + ic) * k;
            for (std::size_t p = 0; p < len; ++p) {
                const std::size_t j_lo = off > p ? off - p : 0;
                const std::size_t j_hi = std::min(k, len + off - p);
                const double dv = dslice[p];
                for (std::size_t j = j_lo; j < j_hi; ++j) gwp[j] += dv * src[p + j - off];
            }
        }
    }
    if (!din) return;
    std::fill(din, din + in_ch * len, 0.0);
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const double* dslice = dout + oc * len;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            const double* w = &blk.weights[(oc * in_ch + ic) * k];
            double* dst = din + ic * len;
            for (std::size_t q = 0; q < len; ++q) {
                // p = q - j + off must stay in [0, len)
                const std::size_t j_lo = q + off >= len ? q + off - len + 1 : 0;
                const std::size_t j_hi = std::min(k, q + off + 1);
                double acc = 0.0;
                for (std::size_t j = j_lo; j < j_hi; ++j) acc += w[j] * dslice[q - j + off];
                dst[q] += acc;
            }
        }
    }
}

void dense_row(const double* in, const ParamBlock& blk, double* out) {
    const std::size_t in_dim = blk.weight_shape[0];
    const std::size_t out_dim = blk.weight_shape[1];
    for (std::size_t o = 0; o < out_dim; ++o) out[o] = blk.bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) {
        const double v = in[i];
        const double* w = &blk.weights[i * out_dim];
        for (std::size_t o = 0; o < out_dim; ++o) out[o] += v * w[o];
    }
}

void forward_row(const ModelWeights& w, const Architecture& arch, ForwardCache& cache,
                 std::size_t r) {
    const std::size_t d = cache.input_dim;
    const std::size_t C = arch.stem_channels;
    const double* x = cache.input.row(r);

    conv_row(x, 1, d, w.blocks[arch.stem_index()], cache.stem_pre.row(r));
    {
        const double* pre = cache.stem_pre.row(r);
        double* out = cache.stem_out.row(r);
        for (std::size_t s = 0; s < C * d; ++s) out[s] = pre[s] > 0.0 ? pre[s] : 0.0;
    }

    const double* cur = cache.stem_out.row(r);
    for (std::size_t i = 0; i < arch.residual_blocks; ++i) {
        conv_row(cur, C, d, w.blocks[arch.res_conv1_index(i)], cache.res_conv1_pre[i].row(r));
        {
            const double* pre = cache.res_conv1_pre[i].row(r);
            double* out = cache.res_conv1_out[i].row(r);
            for (std::size_t s = 0; s < C * d; ++s) out[s] = pre[s] > 0.0 ? pre[s] : 0.0;
        }
        conv_row(cache.res_conv1_out[i].row(r), C, d, w.blocks[arch.res_conv2_index(i)],
                 cache.res_conv2_pre[i].row(r));
        {
            const double* conv2 = cache.res_conv2_pre[i].row(r);
            double* zpre = cache.res_block_pre[i].row(r);
            double* zout = cache.res_block_out[i].row(r);
            for (std::size_t s = 0; s < C * d; ++s) {
                zpre[s] = conv2[s] + cur[s]; // skip connection
                zout[s] = zpre[s] > 0.0 ? zpre[s] : 0.0;
            }
        }
        cur = cache.res_block_out[i].row(r);
    }

    {
        double* pooled = cache.pooled.row(r);
        const double inv_d = 1.0 / double(d);
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t p = 0; p < d; ++p) acc += cur[c * d + p];
            pooled[c] = acc * inv_d;
        }
    }

    const double* h = cache.pooled.row(r);
    for (std::size_t j = 0; j < arch.dense_hidden.size(); ++j) {
        dense_row(h, w.blocks[arch.dense_index(j)], cache.dense_pre[j].row(r));
        const double* pre = cache.dense_pre[j].row(r);
        double* out = cache.dense_out[j].row(r);
        for (std::size_t s = 0; s < arch.dense_hidden[j]; ++s)
            out[s] = pre[s] > 0.0 ? pre[s] : 0.0;
        h = out;
    }
    dense_row(h, w.blocks[arch.out_index()], cache.logits.row(r));
}

struct BackScratch {
    std::vector<double> dh, da, dcur, dz, dv, du, dconv_in;
};

// Reverse pass for one row; gradients accumulate into `g`.
void backward_row(const ModelWeights& w, const Architecture& arch, const ForwardCache& cache,
                  const Matrix& dlogits, std::size_t r, GradientSet& g, BackScratch& s) {
    const std::size_t d = cache.input_dim;
    const std::size_t C = arch.stem_channels;
    const std::size_t n_hidden = arch.dense_hidden.size();

    // output layer
    {
        const ParamBlock& blk = w.blocks[arch.out_index()];
        ParamBlock& gb = g.blocks[arch.out_index()];
        const std::size_t in_dim = blk.weight_shape[0];
        const std::size_t out_dim = blk.weight_shape[1];
        const double* in =
            n_hidden > 0 ? cache.dense_out[n_hidden - 1].row(r) : cache.pooled.row(r);
        const double* dl = dlogits.row(r);
        for (std::size_t o = 0; o < out_dim; ++o) gb.bias[o] += dl[o];
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double v = in[i];
            double* gw = &gb.weights[i * out_dim];
            for (std::size_t o = 0; o < out_dim; ++o) gw[o] += v * dl[o];
        }
        s.dh.assign(in_dim, 0.0);
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double* wp = &blk.weights[i * out_dim];
            double acc = 0.0;
            for (std::size_t o = 0; o < out_dim; ++o) acc += wp[o] * dl[o];
            s.dh[i] = acc;
        }
    }

    // hidden dense layers, deepest first
    for (std::size_t j = n_hidden; j-- > 0;) {
        const ParamBlock& blk = w.blocks[arch.dense_index(j)];
        ParamBlock& gb = g.blocks[arch.dense_index(j)];
        const std::size_t in_dim = blk.weight_shape[0];
        const std::size_t out_dim = blk.weight_shape[1];
        const double* pre = cache.dense_pre[j].row(r);
        const double* in = j > 0 ? cache.dense_out[j - 1].row(r) : cache.pooled.row(r);

        s.da.assign(out_dim, 0.0);
        for (std::size_t o = 0; o < out_dim; ++o)
            s.da[o] = pre[o] > 0.0 ? s.dh[o] : 0.0;
        for (std::size_t o = 0; o < out_dim; ++o) gb.bias[o] += s.da[o];
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double v = in[i];
            double* gw = &gb.weights[i * out_dim];
            for (std::size_t o = 0; o < out_dim; ++o) gw[o] += v * s.da[o];
        }
        s.dh.assign(in_dim, 0.0);
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double* wp = &blk.weights[i * out_dim];
            double acc = 0.0;
            for (std::size_t o = 0; o < out_dim; ++o) acc += wp[o] * s.da[o];
            s.dh[i] = acc;
        }
    }

    // global average pool: spread channel gradients evenly over positions
    s.dcur.assign(C * d, 0.0);
    const double inv_d = 1.0 / double(d);
    for (std::size_t c = 0; c < C; ++c) {
        const double v = s.dh[c] * inv_d;
        for (std::size_t p = 0; p < d; ++p) s.dcur[c * d + p] = v;
    }

    // residual blocks, deepest first
    s.dz.resize(C * d);
    s.dv.resize(C * d);
    s.du.resize(C * d);
    s.dconv_in.resize(C * d);
    for (std::size_t i = arch.residual_blocks; i-- > 0;) {
        const double* zpre = cache.res_block_pre[i].row(r);
        for (std::size_t t = 0; t < C * d; ++t) s.dz[t] = zpre[t] > 0.0 ? s.dcur[t] : 0.0;

        const double* v_in = cache.res_conv1_out[i].row(r);
        conv_row_backward(v_in, C, d, w.blocks[arch.res_conv2_index(i)], s.dz.data(),
                          g.blocks[arch.res_conv2_index(i)].weights.data(),
                          g.blocks[arch.res_conv2_index(i)].bias.data(), s.dv.data());

        const double* c1pre = cache.res_conv1_pre[i].row(r);
        for (std::size_t t = 0; t < C * d; ++t) s.du[t] = c1pre[t] > 0.0 ? s.dv[t] : 0.0;

        const double* blk_in =
            i > 0 ? cache.res_block_out[i - 1].row(r) : cache.stem_out.row(r);
        conv_row_backward(blk_in, C, d, w.blocks[arch.res_conv1_index(i)], s.du.data(),
                          g.blocks[arch.res_conv1_index(i)].weights.data(),
                          g.blocks[arch.res_conv1_index(i)].bias.data(), s.dconv_in.data());

        // skip path adds dz straight through
        for (std::size_t t = 0; t < C * d; ++t) s.dcur[t] = s.dconv_in[t] + s.dz[t];
    }

    // stem
    {
        const double* a0 = cache.stem_pre.row(r);
        for (std::size_t t = 0; t < C * d; ++t) s.dz[t] = a0[t] > 0.0 ? s.dcur[t] : 0.0;
        conv_row_backward(cache.input.row(r), 1, d, w.blocks[arch.stem_index()], s.dz.data(),
                          g.blocks[arch.stem_index()].weights.data(),
                          g.blocks[arch.stem_index()].bias.data(), nullptr);
    }
}

void add_into(GradientSet& total, const GradientSet& part) {
    for (std::size_t b = 0; b < total.blocks.size(); ++b) {
        auto& tw = total.blocks[b].weights;
        const auto& pw = part.blocks[b].weights;
        for (std::size_t i = 0; i < tw.size(); ++i) tw[i] += pw[i];
        auto& tb = total.blocks[b].bias;
        const auto& pb = part.blocks[b].bias;
        for (std::size_t i = 0; i < tb.size(); ++i) tb[i] += pb[i];
    }
}

} // namespace

void ComboNetConfig::validate() const {
    if (input_dim < 1) throw Error(ErrorCode::invalid_config, "input_dim must be positive");
    if (stem_channels < 1)
        throw Error(ErrorCode::invalid_config, "stem_channels must be positive");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw Error(ErrorCode::invalid_config,
                    "kernel_size must be odd and positive, got " + std::to_string(kernel_size));
    for (std::size_t h : dense_hidden)
        if (h < 1) throw Error(ErrorCode::invalid_config, "dense_hidden entries must be positive");
    if (n_classes < 2) throw Error(ErrorCode::invalid_config, "n_classes must be at least 2");
}

std::uint64_t ComboNetConfig::fingerprint() const {
    return fingerprint_of(input_dim, stem_channels, residual_blocks, kernel_size, dense_hidden,
                          n_classes);
}

Architecture derive_architecture(const ModelWeights& w) {
    const auto& blocks = w.blocks;
    auto fail = [](const std::string& msg) -> Architecture {
        throw Error(ErrorCode::dimension_mismatch, "malformed model blocks: " + msg);
    };
    if (blocks.empty()) return fail("no blocks");
    if (blocks[0].kind != LayerKind::conv || blocks[0].weight_shape.size() != 3 ||
        blocks[0].weight_shape[1] != 1)
        return fail("first block must be a 1-input-channel conv stem");

    Architecture a;
    a.stem_channels = blocks[0].weight_shape[0];
    a.kernel_size = blocks[0].weight_shape[2];
    if (a.kernel_size % 2 == 0) return fail("even kernel size");
    if (blocks[0].bias.size() != a.stem_channels) return fail("stem bias size");

    std::size_t i = 1;
    while (i < blocks.size() && blocks[i].kind == LayerKind::conv) {
        if (i + 1 >= blocks.size() || blocks[i + 1].kind != LayerKind::conv)
            return fail("residual block needs two convs");
        for (std::size_t b = i; b <= i + 1; ++b) {
            const auto& shape = blocks[b].weight_shape;
            if (shape.size() != 3 || shape[0] != a.stem_channels ||
                shape[1] != a.stem_channels || shape[2] != a.kernel_size ||
                blocks[b].bias.size() != a.stem_channels)
                return fail("residual conv shape in " + blocks[b].layer_id);
        }
        a.residual_blocks++;
        i += 2;
    }

    if (i >= blocks.size()) return fail("missing dense output layer");
    std::size_t prev = a.stem_channels; // pooled width
    for (; i < blocks.size(); ++i) {
        const auto& blk = blocks[i];
        if (blk.kind != LayerKind::dense || blk.weight_shape.size() != 2)
            return fail("expected dense block at " + blk.layer_id);
        if (blk.weight_shape[0] != prev || blk.bias.size() != blk.weight_shape[1])
            return fail("dense shape chain broken at " + blk.layer_id);
        prev = blk.weight_shape[1];
        if (i + 1 < blocks.size()) a.dense_hidden.push_back(prev);
    }
    a.n_classes = prev;
    if (a.n_classes < 2) return fail("output layer narrower than 2 classes");
    return a;
}

std::uint64_t architecture_fingerprint(const ModelWeights& weights, std::size_t input_dim) {
    const Architecture a = derive_architecture(weights);
    return fingerprint_of(input_dim, a.stem_channels, a.residual_blocks, a.kernel_size,
                          a.dense_hidden, a.n_classes);
}

ModelWeights init_model(const ComboNetConfig& config) {
    config.validate();

    ModelWeights w;
    w.fingerprint = config.fingerprint();
    Rng rng(mix_seed({config.init_seed, 0x1217}));

    auto add_block = [&](const std::string& id, LayerKind kind,
                         std::vector<std::size_t> shape, std::size_t bias_len,
                         std::size_t fan_in) {
        ParamBlock blk;
        blk.layer_id = id;
        blk.kind = kind;
        blk.weight_shape = std::move(shape);
        blk.weights.resize(blk.weight_count());
        blk.bias.assign(bias_len, 0.0);
        const double limit = std::sqrt(6.0 / double(fan_in));
        for (double& v : blk.weights) v = rng.uniform(-limit, limit);
        w.blocks.push_back(std::move(blk));
    };

    const std::size_t C = config.stem_channels;
    const std::size_t k = config.kernel_size;
    add_block("stem", LayerKind::conv, {C, 1, k}, C, 1 * k);
    for (std::size_t i = 0; i < config.residual_blocks; ++i) {
        add_block("res" + std::to_string(i) + ".conv1", LayerKind::conv, {C, C, k}, C, C * k);
        add_block("res" + std::to_string(i) + ".conv2", LayerKind::conv, {C, C, k}, C, C * k);
    }
    std::size_t prev = C;
    for (std::size_t j = 0; j < config.dense_hidden.size(); ++j) {
        const std::size_t h = config.dense_hidden[j];
        add_block("dense" + std::to_string(j), LayerKind::dense, {prev, h}, h, prev);
        prev = h;
    }
    add_block("out", LayerKind::dense, {prev, config.n_classes}, config.n_classes, prev);
    return w;
}

Matrix forward(const ModelWeights& weights, const Batch& batch, ForwardCache& cache) {
    const Architecture arch = derive_architecture(weights);
    const std::size_t b = batch.features.rows;
    const std::size_t d = batch.features.cols;
    if (b == 0 || d == 0)
        throw Error(ErrorCode::empty_input, "forward: empty batch");

    const std::uint64_t expect = fingerprint_of(d, arch.stem_channels, arch.residual_blocks,
                                                arch.kernel_size, arch.dense_hidden,
                                                arch.n_classes);
    if (expect != weights.fingerprint)
        throw Error(ErrorCode::fingerprint_mismatch,
                    "forward: weights fingerprint does not match a batch of width " +
                        std::to_string(d));

    const std::size_t C = arch.stem_channels;
    cache.rows = b;
    cache.input_dim = d;
    cache.input = batch.features;
    cache.stem_pre = Matrix(b, C * d);
    cache.stem_out = Matrix(b, C * d);
    cache.res_conv1_pre.assign(arch.residual_blocks, Matrix(b, C * d));
    cache.res_conv1_out.assign(arch.residual_blocks, Matrix(b, C * d));
    cache.res_conv2_pre.assign(arch.residual_blocks, Matrix(b, C * d));
    cache.res_block_pre.assign(arch.residual_blocks, Matrix(b, C * d));
    cache.res_block_out.assign(arch.residual_blocks, Matrix(b, C * d));
    cache.pooled = Matrix(b, C);
    cache.dense_pre.clear();
    cache.dense_out.clear();
    for (std::size_t h : arch.dense_hidden) {
        cache.dense_pre.push_back(Matrix(b, h));
        cache.dense_out.push_back(Matrix(b, h));
    }
    cache.logits = Matrix(b, arch.n_classes);

#pragma omp parallel for schedule(static) if (parallel_enabled() && b > 1)
    for (long long r = 0; r < (long long)b; ++r)
        forward_row(weights, arch, cache, std::size_t(r));

    return cache.logits;
}

Matrix forward(const ModelWeights& weights, const Batch& batch) {
    ForwardCache cache;
    return forward(weights, batch, cache);
}

Matrix softmax(const Matrix& logits) {
    Matrix probs(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* z = logits.row(r);
        double zmax = z[0];
        for (std::size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        double* p = probs.row(r);
        for (std::size_t c = 0; c < logits.cols; ++c) {
            p[c] = std::exp(z[c] - zmax);
            sum += p[c];
        }
        for (std::size_t c = 0; c < logits.cols; ++c) p[c] /= sum;
    }
    return probs;
}

LossGrad cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t b = logits.rows;
    const std::size_t n_classes = logits.cols;
    if (labels.size() != b)
        throw Error(ErrorCode::length_mismatch, "cross_entropy_loss: labels/logits mismatch");

    LossGrad out;
    out.dlogits = Matrix(b, n_classes);
    double loss_sum = 0.0;
    const double inv_b = 1.0 / double(b);
    for (std::size_t r = 0; r < b; ++r) {
        const int y = labels[r];
        if (y < 0 || std::size_t(y) >= n_classes)
            throw Error(ErrorCode::length_mismatch,
                        "cross_entropy_loss: label out of range at row " + std::to_string(r));
        const double* z = logits.row(r);
        double zmax = z[0];
        for (std::size_t c = 1; c < n_classes; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) sum += std::exp(z[c] - zmax);
        loss_sum += std::log(sum) - (z[std::size_t(y)] - zmax);
        double* dl = out.dlogits.row(r);
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double p = std::exp(z[c] - zmax) / sum;
            dl[c] = (p - (std::size_t(y) == c ? 1.0 : 0.0)) * inv_b;
        }
    }
    out.loss = loss_sum * inv_b;
    return out;
}

GradientSet zero_gradients_like(const ModelWeights& weights) {
    GradientSet g;
    g.blocks.reserve(weights.blocks.size());
    for (const auto& blk : weights.blocks) {
        ParamBlock z;
        z.layer_id = blk.layer_id;
        z.kind = blk.kind;
        z.weight_shape = blk.weight_shape;
        z.weights.assign(blk.weights.size(), 0.0);
        z.bias.assign(blk.bias.size(), 0.0);
        g.blocks.push_back(std::move(z));
    }
    return g;
}

GradientSet backward(const ModelWeights& weights, const ForwardCache& cache,
                     const Matrix& dlogits) {
    const Architecture arch = derive_architecture(weights);
    if (cache.rows == 0 || cache.logits.rows != cache.rows)
        throw Error(ErrorCode::dimension_mismatch, "backward: cache not produced by forward");
    if (dlogits.rows != cache.rows || dlogits.cols != arch.n_classes)
        throw Error(ErrorCode::dimension_mismatch, "backward: dlogits shape mismatch");
    if (cache.stem_pre.cols != arch.stem_channels * cache.input_dim ||
        cache.res_conv1_pre.size() != arch.residual_blocks ||
        cache.dense_pre.size() != arch.dense_hidden.size())
        throw Error(ErrorCode::dimension_mismatch, "backward: cache does not match weights");

    const std::size_t rows = cache.rows;
    const std::size_t n_blocks = (rows + kRowBlock - 1) / kRowBlock;

    if (n_blocks == 1) {
        GradientSet g = zero_gradients_like(weights);
        g.sample_count = rows;
        BackScratch scratch;
        for (std::size_t r = 0; r < rows; ++r)
            backward_row(weights, arch, cache, dlogits, r, g, scratch);
        return g;
    }

    std::vector<GradientSet> partials(n_blocks);
#pragma omp parallel for schedule(static) if (parallel_enabled())
    for (long long blk = 0; blk < (long long)n_blocks; ++blk) {
        GradientSet part = zero_gradients_like(weights);
        BackScratch scratch;
        const std::size_t r0 = std::size_t(blk) * kRowBlock;
        const std::size_t r1 = std::min(rows, r0 + kRowBlock);
        for (std::size_t r = r0; r < r1; ++r)
            backward_row(weights, arch, cache, dlogits, r, part, scratch);
        partials[std::size_t(blk)] = std::move(part);
    }

    GradientSet total = zero_gradients_like(weights);
    total.sample_count = rows;
    for (std::size_t blk = 0; blk < n_blocks; ++blk) add_into(total, partials[blk]);
    return total;
}

ModelWeights sgd_step(const ModelWeights& weights, const GradientSet& grads, double lr) {
    if (!(lr > 0.0))
        throw Error(ErrorCode::invalid_config, "sgd_step: learning rate must be positive");
    require_congruent(weights.blocks, grads.blocks, "sgd_step");

    ModelWeights out = weights;
    for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        auto& wv = out.blocks[b].weights;
        const auto& gv = grads.blocks[b].weights;
        for (std::size_t i = 0; i < wv.size(); ++i) wv[i] -= lr * gv[i];
        auto& wb = out.blocks[b].bias;
        const auto& gb = grads.blocks[b].bias;
        for (std::size_t i = 0; i < wb.size(); ++i) wb[i] -= lr * gb[i];
    }
    return out;
}

LossAndGradient loss_and_gradient(const ModelWeights& weights, const Batch& batch) {
    ForwardCache cache;
    const Matrix logits = forward(weights, batch, cache);
    LossGrad lg = cross_entropy_loss(logits, batch.labels);
    LossAndGradient out;
    out.loss = lg.loss;
    out.grads = backward(weights, cache, lg.dlogits);
    return out;
}

double mean_loss(const ModelWeights& weights, const Batch& batch) {
    constexpr std::size_t kChunk = 512;
    const std::size_t n = batch.features.rows;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t end = std::min(n, start + kChunk);
        Batch chunk;
        chunk.features = Matrix(end - start, batch.features.cols);
        std::copy(batch.features.row(start), batch.features.row(start) +
                  (end - start) * batch.features.cols, chunk.features.data.begin());
        chunk.labels.assign(batch.labels.begin() + long(start), batch.labels.begin() + long(end));
        ForwardCache cache;
        const Matrix logits = forward(weights, chunk, cache);
        loss_sum += cross_entropy_loss(logits, chunk.labels).loss * double(end - start);
    }
    return loss_sum / double(n);
}

TrainResult train_epochs(const ModelWeights& weights, const Dataset& data,
                         const TrainParams& params) {
    if (data.n_samples() == 0)
        throw Error(ErrorCode::empty_input, "train_epochs: empty dataset");

    TrainResult res;
    res.weights = weights;
    if (params.epochs == 0) return res;

    const std::size_t n = data.n_samples();
    std::size_t bs = params.batch_size == 0 ? n : params.batch_size;
    if (bs > n) {
        bs = n;
        res.warnings.push_back("batch_size exceeds dataset size; using full batch");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed({params.shuffle_seed, 0xF7A1}));

    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            Batch batch;
            batch.features = Matrix(end - start, data.n_features());
            batch.labels.resize(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t src = order[i];
                std::copy(data.features.row(src), data.features.row(src) + data.n_features(),
                          batch.features.row(i - start));
                batch.labels[i - start] = data.labels[src];
            }
            LossAndGradient lg = loss_and_gradient(res.weights, batch);
            res.weights = sgd_step(res.weights, lg.grads, params.learning_rate);
            loss_sum += lg.loss * double(end - start);
        }
        res.epoch_losses.push_back(loss_sum / double(n));
    }
    return res;
}

std::vector<int> predict_classes(const ModelWeights& weights, const Matrix& features) {
    constexpr std::size_t kChunk = 512;
    const std::size_t n = features.rows;
    std::vector<int> out(n);
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t end = std::min(n, start + kChunk);
        Batch chunk;
        chunk.features = Matrix(end - start, features.cols);
        std::copy(features.row(start), features.row(start) + (end - start) * features.cols,
                  chunk.features.data.begin());
        ForwardCache cache;
        const Matrix logits = forward(weights, chunk, cache);
        for (std::size_t r = 0; r < logits.rows; ++r) {
            const double* z = logits.row(r);
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols; ++c)
                if (z[c] > z[best]) best = c;
            out[start + r] = int(best);
        }
    }
    return out;
}

double max_abs_weight_delta(const ModelWeights& a, const ModelWeights& b) {
    require_congruent(a.blocks, b.blocks, "max_abs_weight_delta");
    double m = 0.0;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        for (std::size_t j = 0; j < a.blocks[i].weights.size(); ++j)
            m = std::max(m, std::fabs(a.blocks[i].weights[j] - b.blocks[i].weights[j]));
        for (std::size_t j = 0; j < a.blocks[i].bias.size(); ++j)
            m = std::max(m, std::fabs(a.blocks[i].bias[j] - b.blocks[i].bias[j]));
    }
    return m;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw Error(ErrorCode::truncated_file, "weights data truncated at byte " +
                                                       std::to_string(pos));
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t(bytes[pos]) | std::uint16_t(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

constexpr char kMagic[4] = {'F', 'T', 'L', 'W'};

} // namespace

std::size_t serialized_size(const ModelWeights& weights) {
    std::size_t n = 4 + 2 + 8 + 4;
    for (const auto& blk : weights.blocks) {
        n += 2 + blk.layer_id.size() + 1 + 1 + 4 * blk.weight_shape.size();
        n += 8 * blk.weight_count() + 4 + 8 * blk.bias.size();
    }
    return n;
}

std::vector<std::uint8_t> serialize_weights(const ModelWeights& weights) {
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size(weights));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kWeightsFormatVersion);
    put_u64(out, weights.fingerprint);
    put_u32(out, std::uint32_t(weights.blocks.size()));
    for (const auto& blk : weights.blocks) {
        put_u16(out, std::uint16_t(blk.layer_id.size()));
        out.insert(out.end(), blk.layer_id.begin(), blk.layer_id.end());
        out.push_back(std::uint8_t(blk.kind));
        out.push_back(std::uint8_t(blk.weight_shape.size()));
        for (std::size_t s : blk.weight_shape) put_u32(out, std::uint32_t(s));
        for (double v : blk.weights) put_f64(out, v);
        put_u32(out, std::uint32_t(blk.bias.size()));
        for (double v : blk.bias) put_f64(out, v);
    }
    return out;
}

ModelWeights deserialize_weights(const std::vector<std::uint8_t>& bytes) {
    Reader rd{bytes};
    const std::string magic = rd.str(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::version_mismatch, "not a weights file (bad magic)");
    const std::uint16_t version = rd.u16();
    if (version != kWeightsFormatVersion)
        throw Error(ErrorCode::version_mismatch,
                    "unsupported weights format version " + std::to_string(version));

    ModelWeights w;
    w.fingerprint = rd.u64();
    const std::uint32_t block_count = rd.u32();
    if (block_count > 100000)
        throw Error(ErrorCode::truncated_file, "implausible block count");

    for (std::uint32_t b = 0; b < block_count; ++b) {
        ParamBlock blk;
        const std::uint16_t id_len = rd.u16();
        blk.layer_id = rd.str(id_len);
        const std::uint8_t kind = rd.u8();
        if (kind > 1)
            throw Error(ErrorCode::truncated_file,
                        "invalid layer kind in block " + blk.layer_id);
        blk.kind = LayerKind(kind);
        const std::uint8_t ndims = rd.u8();
        if (ndims == 0 || ndims > 4)
            throw Error(ErrorCode::truncated_file, "invalid dim count in " + blk.layer_id);
        std::size_t count = 1;
        for (std::uint8_t i = 0; i < ndims; ++i) {
            const std::uint32_t dim = rd.u32();
            if (dim == 0 || dim > 10000000)
                throw Error(ErrorCode::truncated_file, "implausible dim in " + blk.layer_id);
            blk.weight_shape.push_back(dim);
            count *= dim;
        }
        blk.weights.resize(count);
        for (std::size_t i = 0; i < count; ++i) blk.weights[i] = rd.f64();
        const std::uint32_t bias_len = rd.u32();
        if (bias_len > 10000000)
            throw Error(ErrorCode::truncated_file, "implausible bias length");
        blk.bias.resize(bias_len);
        for (std::size_t i = 0; i < bias_len; ++i) blk.bias[i] = rd.f64();
        w.blocks.push_back(std::move(blk));
    }
    if (rd.pos != bytes.size())
        throw Error(ErrorCode::truncated_file, "trailing bytes after weight blocks");
    return w;
}

ModelWeights deserialize_weights(const std::vector<std::uint8_t>& bytes,
                                 std::uint64_t expected_fingerprint) {
    ModelWeights w = deserialize_weights(bytes);
    if (w.fingerprint != expected_fingerprint)
        throw Error(ErrorCode::fingerprint_mismatch,
                    "weights fingerprint does not match the expected configuration");
    return w;
}

void save_weights(const ModelWeights& weights, const std::string& path) {
    const auto bytes = serialize_weights(weights);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::io_error, "short write to " + path);
}

ModelWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "cannot open weights file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

} // namespace ftl
