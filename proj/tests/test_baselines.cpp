#include "doctest.h"

#include <cmath>

#include "ftl/baselines.hpp"
#include "ftl/parallel.hpp"
#include "ftl/synth.hpp"

using namespace ftl;

namespace {

Dataset from_columns(const std::vector<std::vector<double>>& columns,
                     const std::vector<int>& labels, std::size_t n_classes) {
    Dataset d;
    const std::size_t n = columns[0].size();
    d.features = Matrix(n, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        d.feature_meta.push_back({"f" + std::to_string(j), FeatureKind::numeric});
        for (std::size_t i = 0; i < n; ++i) d.features(i, j) = columns[j][i];
    }
    d.labels = labels;
    for (std::size_t c = 0; c < n_classes; ++c)
        d.label_names.push_back("c" + std::to_string(c));
    return d;
}

double train_accuracy(const BaselineModel& m, const Dataset& d) {
    const std::vector<int> pred = predict_baseline(m, d.features);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == d.labels[i];
    return double(ok) / double(pred.size());
}

} // namespace

TEST_CASE("gini impurity hand cases") {
    CHECK(gini_impurity({5, 0}) == 0.0);
    CHECK(gini_impurity({1, 1}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gini_impurity({2, 1, 1}) == doctest::Approx(0.625).epsilon(1e-15));
    CHECK_THROWS_AS(gini_impurity({0, 0}), Error);
}

TEST_CASE("gnb fits the hand-worked gaussian example") {
    // class 0 samples {0, 2}, class 1 samples {10, 12}
    const Dataset d = from_columns({{0, 2, 10, 12}}, {0, 0, 1, 1}, 2);
    const BaselineModel m = fit_baseline(BaselineKind::gnb, d, {}, 1);
    CHECK(m.gnb.means(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.gnb.variances(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.gnb.means(1, 0) == doctest::Approx(11.0).epsilon(1e-15));
    CHECK(m.gnb.variances(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::exp(m.gnb.log_priors[0]) == doctest::Approx(0.5).epsilon(1e-15));

    // hand-computed posteriors: x=1 -> class 0, x=11 -> class 1
    Matrix q(2, 1);
    q(0, 0) = 1.0;
    q(1, 0) = 11.0;
    CHECK(predict_baseline(m, q) == std::vector<int>{0, 1});
}

TEST_CASE("gnb breaks posterior ties toward class 0") {
    // symmetric classes around x = 5: the midpoint is an exact tie
    const Dataset d = from_columns({{0, 2, 8, 10}}, {0, 0, 1, 1}, 2);
    const BaselineModel m = fit_baseline(BaselineKind::gnb, d, {}, 1);
    Matrix q(1, 1);
    q(0, 0) = 5.0;
    CHECK(predict_baseline(m, q) == std::vector<int>{0});
}

TEST_CASE("gnb log posteriors stay finite on [0,1] features with floored variance") {
    Dataset d = make_blobs(50, 4, 2, 5);
    // squash a feature to a constant within one class to hit the floor
    for (std::size_t i = 0; i < d.n_samples(); ++i)
        if (d.labels[i] == 0) d.features(i, 0) = 0.25;
    const BaselineModel m = fit_baseline(BaselineKind::gnb, d, {}, 1);
    CHECK(m.gnb.variances(0, 0) == 1e-9);
    const std::vector<int> pred = predict_baseline(m, d.features);
    CHECK(pred.size() == d.n_samples());
}

TEST_CASE("lr reaches full accuracy on separable blobs") {
    const Dataset d = make_blobs(80, 3, 2, 9, 4.0, 0.5);
    const BaselineModel m = fit_baseline(BaselineKind::lr, d, {}, 2);
    CHECK(train_accuracy(m, d) == doctest::Approx(1.0));
}

TEST_CASE("lr full-batch loss is non-increasing at a small learning rate") {
    const Dataset d = make_blobs(60, 4, 3, 11);
    BaselineHyperparams hp;
    hp.lr_learning_rate = 0.01;
    std::vector<double> losses;
    for (std::size_t epochs : {0, 5, 10, 20, 40}) {
        hp.lr_epochs = epochs;
        const BaselineModel m = fit_baseline(BaselineKind::lr, d, hp, 3);
        losses.push_back(linear_model_loss(m.linear, d));
    }
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
}

TEST_CASE("sgd classifier learns separable blobs and is seed-deterministic") {
    const Dataset d = make_blobs(100, 3, 2, 13, 4.0, 0.5);
    BaselineHyperparams hp;
    hp.sgd_epochs = 40;
    const BaselineModel a = fit_baseline(BaselineKind::sgd, d, hp, 7);
    const BaselineModel b = fit_baseline(BaselineKind::sgd, d, hp, 7);
    CHECK(a.linear.weights.data == b.linear.weights.data);
    CHECK(a.linear.bias == b.linear.bias);
    CHECK(train_accuracy(a, d) >= 0.95);

    const BaselineModel c = fit_baseline(BaselineKind::sgd, d, hp, 8);
    CHECK(c.linear.weights.data != a.linear.weights.data);
}

TEST_CASE("single-class training data is rejected") {
    const Dataset d = from_columns({{1, 2, 3}}, {0, 0, 0}, 1);
    for (BaselineKind kind :
         {BaselineKind::lr, BaselineKind::gnb, BaselineKind::sgd, BaselineKind::rf}) {
        try {
            fit_baseline(kind, d, {}, 1);
            FAIL("expected single-class error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::single_class);
        }
    }
}

TEST_CASE("a depth-1 tree splits perfectly separable data to pure leaves") {
    const Dataset d = from_columns({{0, 1, 2, 10, 11, 12}}, {0, 0, 0, 1, 1, 1}, 2);
    BaselineHyperparams hp;
    hp.rf_trees = 1;
    hp.rf_max_depth = 1;
    const BaselineModel m = fit_baseline(BaselineKind::rf, d, hp, 3);
    REQUIRE(m.rf.trees.size() == 1);
    const auto& nodes = m.rf.trees[0].nodes;
    REQUIRE(nodes.size() == 3);
    CHECK(nodes[0].feature == 0);
    // both children are pure
    for (int child : {nodes[0].left, nodes[0].right}) {
        const auto& counts = nodes[std::size_t(child)].class_counts;
        CHECK(gini_impurity(counts) == 0.0);
    }
}

TEST_CASE("rf fit is deterministic and learns blob structure") {
    const Dataset d = make_blobs(120, 4, 3, 15, 4.0, 0.7);
    BaselineHyperparams hp;
    hp.rf_trees = 15;
    hp.rf_max_depth = 8;
    const BaselineModel a = fit_baseline(BaselineKind::rf, d, hp, 5);
    const BaselineModel b = fit_baseline(BaselineKind::rf, d, hp, 5);
    REQUIRE(a.rf.trees.size() == b.rf.trees.size());
    for (std::size_t t = 0; t < a.rf.trees.size(); ++t) {
        REQUIRE(a.rf.trees[t].nodes.size() == b.rf.trees[t].nodes.size());
        for (std::size_t n = 0; n < a.rf.trees[t].nodes.size(); ++n) {
            CHECK(a.rf.trees[t].nodes[n].feature == b.rf.trees[t].nodes[n].feature);
            CHECK(a.rf.trees[t].nodes[n].threshold == b.rf.trees[t].nodes[n].threshold);
        }
    }
    CHECK(train_accuracy(a, d) >= 0.95);
}

TEST_CASE("rf parallel fit equals serial fit") {
    const Dataset d = make_blobs(100, 4, 2, 17);
    BaselineHyperparams hp;
    hp.rf_trees = 8;
    set_parallel_enabled(false);
    const BaselineModel serial = fit_baseline(BaselineKind::rf, d, hp, 9);
    set_parallel_enabled(true);
    const BaselineModel parallel = fit_baseline(BaselineKind::rf, d, hp, 9);
    REQUIRE(serial.rf.trees.size() == parallel.rf.trees.size());
    for (std::size_t t = 0; t < serial.rf.trees.size(); ++t)
        for (std::size_t n = 0; n < serial.rf.trees[t].nodes.size(); ++n)
            CHECK(serial.rf.trees[t].nodes[n].threshold ==
                  parallel.rf.trees[t].nodes[n].threshold);
}

TEST_CASE("a forest of identical trees votes like the single tree") {
    const Dataset d = make_blobs(60, 3, 2, 19);
    BaselineHyperparams hp;
    hp.rf_trees = 1;
    const BaselineModel one = fit_baseline(BaselineKind::rf, d, hp, 21);
    BaselineModel many = one;
    for (int i = 0; i < 4; ++i) many.rf.trees.push_back(one.rf.trees[0]);
    CHECK(predict_baseline(many, d.features) == predict_baseline(one, d.features));
}

TEST_CASE("predict_baseline rejects a feature-width mismatch") {
    const Dataset d = make_blobs(30, 3, 2, 23);
    const BaselineModel m = fit_baseline(BaselineKind::gnb, d, {}, 1);
    Matrix wrong(2, 4, 0.0);
    CHECK_THROWS_AS(predict_baseline(m, wrong), Error);
}

TEST_CASE("baseline JSON carries kind-specific parameters") {
    const Dataset d = make_blobs(40, 3, 2, 25);
    const auto gnb_json = baseline_to_json(fit_baseline(BaselineKind::gnb, d, {}, 1));
    CHECK(gnb_json["kind"] == "gnb");
    CHECK(gnb_json.contains("means"));

    BaselineHyperparams hp;
    hp.rf_trees = 2;
    const auto rf_json = baseline_to_json(fit_baseline(BaselineKind::rf, d, hp, 1));
    CHECK(rf_json["kind"] == "rf");
    CHECK(rf_json["trees"].size() == 2);

    const auto lr_json = baseline_to_json(fit_baseline(BaselineKind::lr, d, {}, 1));
    CHECK(lr_json["kind"] == "lr");
    CHECK(lr_json["weights"].size() == 3);
}
