#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftl/common.hpp"
#include "ftl/dataset_io.hpp"

#include "json.hpp"

namespace ftl {

enum class BaselineKind { lr, gnb, sgd, rf };

const char* baseline_kind_name(BaselineKind kind);
BaselineKind baseline_kind_from_string(const std::string& name);

// Multinomial softmax regression parameters (shared by lr and sgd).
struct LinearModel {
    Matrix weights; // d x C
    std::vector<double> bias;
};

struct GnbModel {
    std::vector<double> log_priors;
    Matrix means;     // C x d
    Matrix variances; // C x d, floored
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<std::int64_t> class_counts; // leaf payload
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // node 0 is the root
};

struct RfModel {
    std::vector<DecisionTree> trees;
};

struct BaselineModel {
    BaselineKind kind = BaselineKind::lr;
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    LinearModel linear;
    GnbModel gnb;
    RfModel rf;
};

struct BaselineHyperparams {
    double lr_learning_rate = 0.1;
    std::size_t lr_epochs = 500;
    double sgd_learning_rate = 0.01;
    std::size_t sgd_batch_size = 32;
    std::size_t sgd_epochs = 20;
    std::size_t rf_trees = 50;
    std::size_t rf_max_depth = 12;
    double gnb_variance_floor = 1e-9;
};

// lr: full-batch gradient descent on the softmax objective. sgd: the same
// objective with seeded mini-batches. gnb: closed-form Gaussian fit. rf:
// bagged CART with Gini impurity and sqrt(d) feature subsampling per split.
BaselineModel fit_baseline(BaselineKind kind, const Dataset& train,
                           const BaselineHyperparams& hp, std::uint64_t seed);

// Ties always break toward the lowest class index.
std::vector<int> predict_baseline(const BaselineModel& model, const Matrix& features);

// 1 - sum_k (c_k / n)^2
double gini_impurity(const std::vector<std::int64_t>& class_counts);

// Mean softmax cross entropy of a linear model; exposed for the
// loss-non-increasing property of full-batch training.
double linear_model_loss(const LinearModel& model, const Dataset& data);

nlohmann::ordered_json baseline_to_json(const BaselineModel& model);

} // namespace ftl
