#include "ftl/baselines.hpp"
#include "ftl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ftl {

const char* baseline_kind_name(BaselineKind kind) {
    switch (kind) {
    case BaselineKind::lr: return "lr";
    case BaselineKind::gnb: return "gnb";
    case BaselineKind::sgd: return "sgd";
    case BaselineKind::rf: return "rf";
    }
    return "?";
}

BaselineKind baseline_kind_from_string(const std::string& name) {
    if (name == "lr") return BaselineKind::lr;
    if (name == "gnb") return BaselineKind::gnb;
    if (name == "sgd") return BaselineKind::sgd;
    if (name == "rf") return BaselineKind::rf;
    throw Error(ErrorCode::invalid_config, "unknown baseline kind: " + name);
}

double gini_impurity(const std::vector<std::int64_t>& class_counts) {
    std::int64_t n = 0;
    for (std::int64_t c : class_counts) n += c;
    if (n <= 0)
        throw Error(ErrorCode::empty_input, "gini_impurity: all counts are zero");
    double acc = 0.0;
    for (std::int64_t c : class_counts) {
        const double p = double(c) / double(n);
        acc += p * p;
    }
    return 1.0 - acc;
}

namespace {

void check_trainable(const Dataset& train) {
    if (train.n_samples() == 0)
        throw Error(ErrorCode::empty_input, "fit_baseline: empty training data");
    int first = train.labels[0];
    bool multi = false;
    for (int l : train.labels)
        if (l != first) {
            multi = true;
            break;
        }
    if (!multi)
        throw Error(ErrorCode::single_class,
                    "fit_baseline: training data contains a single class");
}

// softmax probabilities for a row of logits, in place
void row_softmax(double* z, std::size_t n) {
    double zmax = z[0];
    for (std::size_t c = 1; c < n; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        z[c] = std::exp(z[c] - zmax);
        sum += z[c];
    }
    for (std::size_t c = 0; c < n; ++c) z[c] /= sum;
}

void linear_logits_row(const LinearModel& m, const double* x, double* out) {
    const std::size_t d = m.weights.rows;
    const std::size_t n_cls = m.weights.cols;
    for (std::size_t c = 0; c < n_cls; ++c) out[c] = m.bias[c];
    for (std::size_t j = 0; j < d; ++j) {
        const double v = x[j];
        const double* w = m.weights.row(j);
        for (std::size_t c = 0; c < n_cls; ++c) out[c] += v * w[c];
    }
}

// One gradient step of the softmax objective over rows [begin, end) of the
// given order; returns the mean loss over those rows at the pre-step model.
double linear_step(LinearModel& m, const Dataset& data, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end, double lr) {
    const std::size_t d = m.weights.rows;
    const std::size_t n_cls = m.weights.cols;
    const std::size_t b = end - begin;

    Matrix gw(d, n_cls);
    std::vector<double> gb(n_cls, 0.0);
    std::vector<double> logits(n_cls);
    double loss = 0.0;

    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t r = order[i];
        const double* x = data.features.row(r);
        linear_logits_row(m, x, logits.data());
        double zmax = logits[0];
        for (std::size_t c = 1; c < n_cls; ++c) zmax = std::max(zmax, logits[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < n_cls; ++c) sum += std::exp(logits[c] - zmax);
        loss += std::log(sum) - (logits[std::size_t(data.labels[r])] - zmax);
        row_softmax(logits.data(), n_cls);
        logits[std::size_t(data.labels[r])] -= 1.0;
        for (std::size_t c = 0; c < n_cls; ++c) gb[c] += logits[c];
        for (std::size_t j = 0; j < d; ++j) {
            const double v = x[j];
            double* g = gw.row(j);
            for (std::size_t c = 0; c < n_cls; ++c) g[c] += v * logits[c];
        }
    }

    const double scale = lr / double(b);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t c = 0; c < n_cls; ++c) m.weights(j, c) -= scale * gw(j, c);
    for (std::size_t c = 0; c < n_cls; ++c) m.bias[c] -= scale * gb[c];
    return loss / double(b);
}

LinearModel fit_linear(const Dataset& train, double lr, std::size_t epochs,
                       std::size_t batch_size, std::uint64_t seed) {
    const std::size_t n = train.n_samples();
    LinearModel m;
    m.weights = Matrix(train.n_features(), train.n_classes());
    m.bias.assign(train.n_classes(), 0.0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::min(batch_size == 0 ? n : batch_size, n);
    Rng rng(mix_seed({seed, 0xBA5E}));

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (bs < n) rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += bs)
            linear_step(m, train, order, start, std::min(n, start + bs), lr);
    }
    return m;
}

GnbModel fit_gnb(const Dataset& train, double variance_floor) {
    const std::size_t n = train.n_samples();
    const std::size_t d = train.n_features();
    const std::size_t n_cls = train.n_classes();

    GnbModel m;
    m.means = Matrix(n_cls, d);
    m.variances = Matrix(n_cls, d);
    std::vector<std::size_t> counts(n_cls, 0);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = std::size_t(train.labels[i]);
        counts[c]++;
        for (std::size_t j = 0; j < d; ++j) m.means(c, j) += train.features(i, j);
    }
    for (std::size_t c = 0; c < n_cls; ++c)
        if (counts[c] > 0)
            for (std::size_t j = 0; j < d; ++j) m.means(c, j) /= double(counts[c]);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = std::size_t(train.labels[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = train.features(i, j) - m.means(c, j);
            m.variances(c, j) += dv * dv;
        }
    }
    m.log_priors.assign(n_cls, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < n_cls; ++c) {
        if (counts[c] == 0) continue; // class absent from train: prior stays -inf
        for (std::size_t j = 0; j < d; ++j)
            m.variances(c, j) = std::max(m.variances(c, j) / double(counts[c]), variance_floor);
        m.log_priors[c] = std::log(double(counts[c]) / double(n));
    }
    return m;
}

// ---------------------------------------------------------------------------
// random forest

struct TreeBuilder {
    const Dataset& data;
    std::size_t max_depth;
    std::size_t n_feature_candidates;
    Rng rng;
    DecisionTree tree;

    std::vector<std::int64_t> count_classes(const std::vector<std::size_t>& rows) const {
        std::vector<std::int64_t> counts(data.n_classes(), 0);
        for (std::size_t r : rows) counts[std::size_t(data.labels[r])]++;
        return counts;
    }

    int make_leaf(const std::vector<std::size_t>& rows) {
        TreeNode node;
        node.class_counts = count_classes(rows);
        tree.nodes.push_back(std::move(node));
        return int(tree.nodes.size()) - 1;
    }

    int build(std::vector<std::size_t>& rows, std::size_t depth) {
        auto counts = count_classes(rows);
        const double parent_gini = gini_impurity(counts);
        if (depth >= max_depth || rows.size() < 2 || parent_gini == 0.0)
            return make_leaf(rows);

        // sample features without replacement, then scan in sorted order so
        // the search is independent of the draw order
        std::vector<std::size_t> features(data.n_features());
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t i = 0; i < n_feature_candidates && i + 1 < features.size(); ++i) {
            const std::size_t j = i + std::size_t(rng.below(features.size() - i));
            std::swap(features[i], features[j]);
        }
        features.resize(std::min(n_feature_candidates, features.size()));
        std::sort(features.begin(), features.end());

        double best_score = parent_gini;
        std::size_t best_feature = 0;
        double best_threshold = 0.0;
        bool found = false;

        std::vector<std::pair<double, int>> values(rows.size());
        for (std::size_t f : features) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                values[i] = {data.features(rows[i], f), data.labels[rows[i]]};
            std::sort(values.begin(), values.end());

            std::vector<std::int64_t> left(data.n_classes(), 0);
            std::vector<std::int64_t> right = counts;
            const double total = double(rows.size());
            for (std::size_t i = 0; i + 1 < values.size(); ++i) {
                left[std::size_t(values[i].second)]++;
                right[std::size_t(values[i].second)]--;
                if (values[i].first == values[i + 1].first) continue;
                const double nl = double(i + 1);
                const double nr = total - nl;
                const double score =
                    (nl / total) * gini_impurity(left) + (nr / total) * gini_impurity(right);
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = 0.5 * (values[i].first + values[i + 1].first);
                    found = true;
                }
            }
        }

        if (!found) return make_leaf(rows);

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows)
            (data.features(r, best_feature) <= best_threshold ? left_rows : right_rows)
                .push_back(r);
        if (left_rows.empty() || right_rows.empty()) return make_leaf(rows);
        rows.clear();
        rows.shrink_to_fit();

        const int node_index = int(tree.nodes.size());
        tree.nodes.push_back(TreeNode{int(best_feature), best_threshold, -1, -1, {}});
        const int left_index = build(left_rows, depth + 1);
        const int right_index = build(right_rows, depth + 1);
        tree.nodes[std::size_t(node_index)].left = left_index;
        tree.nodes[std::size_t(node_index)].right = right_index;
        return node_index;
    }
};

DecisionTree fit_tree(const Dataset& train, std::size_t max_depth, std::uint64_t seed) {
    const std::size_t n = train.n_samples();
    const std::size_t n_candidates = std::max<std::size_t>(
        1, std::size_t(std::ceil(std::sqrt(double(train.n_features())))));

    TreeBuilder builder{train, max_depth, n_candidates, Rng(seed), {}};
    std::vector<std::size_t> rows(n); // bootstrap sample
    for (std::size_t i = 0; i < n; ++i) rows[i] = std::size_t(builder.rng.below(n));
    builder.build(rows, 0);
    return std::move(builder.tree);
}

int tree_predict(const DecisionTree& tree, const double* x) {
    std::size_t node = 0;
    while (tree.nodes[node].feature >= 0) {
        const TreeNode& n = tree.nodes[node];
        node = std::size_t(x[n.feature] <= n.threshold ? n.left : n.right);
    }
    const auto& counts = tree.nodes[node].class_counts;
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[best]) best = c;
    return int(best);
}

} // namespace

double linear_model_loss(const LinearModel& model, const Dataset& data) {
    const std::size_t n_cls = model.weights.cols;
    std::vector<double> logits(n_cls);
    double loss = 0.0;
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
        linear_logits_row(model, data.features.row(i), logits.data());
        double zmax = logits[0];
        for (std::size_t c = 1; c < n_cls; ++c) zmax = std::max(zmax, logits[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < n_cls; ++c) sum += std::exp(logits[c] - zmax);
        loss += std::log(sum) - (logits[std::size_t(data.labels[i])] - zmax);
    }
    return loss / double(data.n_samples());
}

BaselineModel fit_baseline(BaselineKind kind, const Dataset& train,
                           const BaselineHyperparams& hp, std::uint64_t seed) {
    check_trainable(train);

    BaselineModel model;
    model.kind = kind;
    model.n_features = train.n_features();
    model.n_classes = train.n_classes();

    switch (kind) {
    case BaselineKind::lr:
        model.linear = fit_linear(train, hp.lr_learning_rate, hp.lr_epochs,
                                  train.n_samples(), seed);
        break;
    case BaselineKind::sgd:
        model.linear = fit_linear(train, hp.sgd_learning_rate, hp.sgd_epochs,
                                  hp.sgd_batch_size, seed);
        break;
    case BaselineKind::gnb:
        model.gnb = fit_gnb(train, hp.gnb_variance_floor);
        break;
    case BaselineKind::rf: {
        model.rf.trees.resize(hp.rf_trees);
        auto& trees = model.rf.trees;
        // independent per-tree seeds; slot-indexed writes keep this loop
        // deterministic under any thread count
#pragma omp parallel for schedule(dynamic) if (parallel_enabled() && hp.rf_trees > 1)
        for (long long t = 0; t < (long long)hp.rf_trees; ++t)
            trees[std::size_t(t)] =
                fit_tree(train, hp.rf_max_depth, mix_seed({seed, 0xF0CE57, std::uint64_t(t)}));
        break;
    }
    }
    return model;
}

std::vector<int> predict_baseline(const BaselineModel& model, const Matrix& features) {
    if (features.cols != model.n_features)
        throw Error(ErrorCode::dimension_mismatch,
                    "predict_baseline: expected " + std::to_string(model.n_features) +
                        " features, got " + std::to_string(features.cols));

    const std::size_t n = features.rows;
    std::vector<int> out(n);

    switch (model.kind) {
    case BaselineKind::lr:
    case BaselineKind::sgd: {
        const std::size_t n_cls = model.n_classes;
        std::vector<double> logits(n_cls);
        for (std::size_t i = 0; i < n; ++i) {
            linear_logits_row(model.linear, features.row(i), logits.data());
            std::size_t best = 0;
            for (std::size_t c = 1; c < n_cls; ++c)
                if (logits[c] > logits[best]) best = c;
            out[i] = int(best);
        }
        break;
    }
    case BaselineKind::gnb: {
        const std::size_t n_cls = model.n_classes;
        const std::size_t d = model.n_features;
        constexpr double kLogTwoPi = 1.8378770664093453;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = features.row(i);
            double best_score = -std::numeric_limits<double>::infinity();
            std::size_t best = 0;
            for (std::size_t c = 0; c < n_cls; ++c) {
                double score = model.gnb.log_priors[c];
                if (std::isfinite(score)) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const double var = model.gnb.variances(c, j);
                        const double dv = x[j] - model.gnb.means(c, j);
                        score -= 0.5 * (kLogTwoPi + std::log(var) + dv * dv / var);
                    }
                }
                if (score > best_score) {
                    best_score = score;
                    best = c;
                }
            }
            out[i] = int(best);
        }
        break;
    }
    case BaselineKind::rf: {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 256)
        for (long long i = 0; i < (long long)n; ++i) {
            std::vector<std::size_t> votes(model.n_classes, 0);
            for (const auto& tree : model.rf.trees)
                votes[std::size_t(tree_predict(tree, features.row(std::size_t(i))))]++;
            std::size_t best = 0;
            for (std::size_t c = 1; c < votes.size(); ++c)
                if (votes[c] > votes[best]) best = c;
            out[std::size_t(i)] = int(best);
        }
        break;
    }
    }
    return out;
}

nlohmann::ordered_json baseline_to_json(const BaselineModel& model) {
    nlohmann::ordered_json j;
    j["kind"] = baseline_kind_name(model.kind);
    j["n_features"] = model.n_features;
    j["n_classes"] = model.n_classes;
    switch (model.kind) {
    case BaselineKind::lr:
    case BaselineKind::sgd: {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < model.linear.weights.rows; ++r) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (std::size_t c = 0; c < model.linear.weights.cols; ++c)
                row.push_back(model.linear.weights(r, c));
            rows.push_back(row);
        }
        j["weights"] = rows;
        j["bias"] = model.linear.bias;
        break;
    }
    case BaselineKind::gnb: {
        j["log_priors"] = model.gnb.log_priors;
        auto matrix_json = [](const Matrix& m) {
            nlohmann::ordered_json rows = nlohmann::ordered_json::array();
            for (std::size_t r = 0; r < m.rows; ++r) {
                nlohmann::ordered_json row = nlohmann::ordered_json::array();
                for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
                rows.push_back(row);
            }
            return rows;
        };
        j["means"] = matrix_json(model.gnb.means);
        j["variances"] = matrix_json(model.gnb.variances);
        break;
    }
    case BaselineKind::rf: {
        nlohmann::ordered_json trees = nlohmann::ordered_json::array();
        for (const auto& tree : model.rf.trees) {
            nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
            for (const auto& n : tree.nodes) {
                nlohmann::ordered_json node;
                node["feature"] = n.feature;
                node["threshold"] = n.threshold;
                node["left"] = n.left;
                node["right"] = n.right;
                node["class_counts"] = n.class_counts;
                nodes.push_back(node);
            }
            trees.push_back(nodes);
        }
        j["trees"] = trees;
        break;
    }
    }
    return j;
}

} // namespace ftl
