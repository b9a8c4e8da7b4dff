#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftl/common.hpp"

#include "json.hpp"

namespace ftl {

// Rows index the true class, columns the predicted class.
struct ConfusionMatrix {
    std::size_t n_classes = 0;
    std::vector<std::int64_t> counts; // row-major [n_classes x n_classes]
    std::int64_t total = 0;

    std::int64_t at(std::size_t t, std::size_t p) const { return counts[t * n_classes + p]; }
    std::int64_t row_sum(std::size_t t) const;
    std::int64_t col_sum(std::size_t p) const;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision; // per class
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::int64_t> support; // true count per class
    ConfusionMatrix confusion;
};

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels,
                          std::size_t n_classes);

// Precision_k = M[k][k]/colsum_k, recall_k = M[k][k]/rowsum_k,
// F1_k = 2PR/(P+R). 0/0 is defined as 0 and still enters the macro mean.
MetricsReport macro_report(const ConfusionMatrix& cm);

// Stable key order; label names are optional column headers for the report.
nlohmann::ordered_json metrics_to_json(const MetricsReport& report,
                                       const std::vector<std::string>& label_names = {});

} // namespace ftl
