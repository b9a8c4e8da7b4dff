#include "ftl/reference.hpp"

#include <cmath>

namespace ftl::ref {

Matrix pearson_matrix(const Dataset& data) {
    const std::size_t n = data.n_samples();
    const std::size_t f = data.n_features();
    const std::size_t dim = f + 1;

    auto value = [&](std::size_t col, std::size_t row) {
        return col < f ? data.features(row, col) : double(data.labels[row]);
    };

    Matrix out(dim, dim);
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = 0; b < dim; ++b) {
            if (a == b) {
                out(a, b) = 1.0;
                continue;
            }
            double mean_a = 0.0, mean_b = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                mean_a += value(a, i);
                mean_b += value(b, i);
            }
            mean_a /= double(n);
            mean_b /= double(n);
            double cov = 0.0, var_a = 0.0, var_b = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double da = value(a, i) - mean_a;
                const double db = value(b, i) - mean_b;
                cov += da * db;
                var_a += da * da;
                var_b += db * db;
            }
            out(a, b) = (cov / double(n)) /
                        (std::sqrt(var_a / double(n)) * std::sqrt(var_b / double(n)));
        }
    }
    return out;
}

ModelWeights weighted_average(const std::vector<ModelWeights>& models,
                              const std::vector<std::size_t>& counts) {
    double n = 0.0;
    for (std::size_t c : counts) n += double(c);

    ModelWeights out = models[0];
    for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        for (std::size_t i = 0; i < out.blocks[b].weights.size(); ++i) {
            double acc = 0.0;
            for (std::size_t m = 0; m < models.size(); ++m)
                acc += (double(counts[m]) / n) * models[m].blocks[b].weights[i];
            out.blocks[b].weights[i] = acc;
        }
        for (std::size_t i = 0; i < out.blocks[b].bias.size(); ++i) {
            double acc = 0.0;
            for (std::size_t m = 0; m < models.size(); ++m)
                acc += (double(counts[m]) / n) * models[m].blocks[b].bias[i];
            out.blocks[b].bias[i] = acc;
        }
    }
    return out;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    long double loss = 0.0L;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* z = logits.row(r);
        long double zmax = z[0];
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (z[c] > zmax) zmax = z[c];
        long double sum = 0.0L;
        for (std::size_t c = 0; c < logits.cols; ++c) sum += expl((long double)z[c] - zmax);
        loss += logl(sum) - ((long double)z[std::size_t(labels[r])] - zmax);
    }
    return double(loss / (long double)logits.rows);
}

GradientSet finite_difference_gradient(const ModelWeights& weights, const Batch& batch,
                                       double h) {
    auto loss_at = [&](const ModelWeights& w) {
        const Matrix logits = forward(w, batch);
        return cross_entropy_loss(logits, batch.labels).loss;
    };

    GradientSet g = zero_gradients_like(weights);
    g.sample_count = batch.features.rows;
    ModelWeights work = weights;
    for (std::size_t b = 0; b < work.blocks.size(); ++b) {
        for (std::size_t i = 0; i < work.blocks[b].weights.size(); ++i) {
            const double orig = work.blocks[b].weights[i];
            work.blocks[b].weights[i] = orig + h;
            const double up = loss_at(work);
            work.blocks[b].weights[i] = orig - h;
            const double down = loss_at(work);
            work.blocks[b].weights[i] = orig;
            g.blocks[b].weights[i] = (up - down) / (2.0 * h);
        }
        for (std::size_t i = 0; i < work.blocks[b].bias.size(); ++i) {
            const double orig = work.blocks[b].bias[i];
            work.blocks[b].bias[i] = orig + h;
            const double up = loss_at(work);
            work.blocks[b].bias[i] = orig - h;
            const double down = loss_at(work);
            work.blocks[b].bias[i] = orig;
            g.blocks[b].bias[i] = (up - down) / (2.0 * h);
        }
    }
    return g;
}

} // namespace ftl::ref
