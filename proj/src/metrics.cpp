#include "ftl/metrics.hpp"

namespace ftl {

std::int64_t ConfusionMatrix::row_sum(std::size_t t) const {
    std::int64_t s = 0;
    for (std::size_t p = 0; p < n_classes; ++p) s += at(t, p);
    return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t p) const {
    std::int64_t s = 0;
    for (std::size_t t = 0; t < n_classes; ++t) s += counts[t * n_classes + p];
    return s;
}

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels,
                          std::size_t n_classes) {
    if (true_labels.size() != predicted_labels.size())
        throw Error(ErrorCode::length_mismatch,
                    "confusion: true/predicted length mismatch (" +
                        std::to_string(true_labels.size()) + " vs " +
                        std::to_string(predicted_labels.size()) + ")");
    if (true_labels.empty())
        throw Error(ErrorCode::empty_input, "confusion: empty label sequences");

    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(n_classes * n_classes, 0);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        int t = true_labels[i];
        int p = predicted_labels[i];
        if (t < 0 || std::size_t(t) >= n_classes || p < 0 || std::size_t(p) >= n_classes)
            throw Error(ErrorCode::length_mismatch,
                        "confusion: label out of range at index " + std::to_string(i));
        cm.counts[std::size_t(t) * n_classes + std::size_t(p)]++;
    }
    cm.total = std::int64_t(true_labels.size());
    return cm;
}

MetricsReport macro_report(const ConfusionMatrix& cm) {
    if (cm.total <= 0)
        throw Error(ErrorCode::empty_input, "macro_report: empty confusion matrix");

    MetricsReport r;
    r.confusion = cm;
    const std::size_t k = cm.n_classes;
    r.precision.resize(k);
    r.recall.resize(k);
    r.f1.resize(k);
    r.support.resize(k);

    std::int64_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::int64_t tp = cm.at(c, c);
        const std::int64_t col = cm.col_sum(c);
        const std::int64_t row = cm.row_sum(c);
        trace += tp;
        r.support[c] = row;
        r.precision[c] = col > 0 ? double(tp) / double(col) : 0.0;
        r.recall[c] = row > 0 ? double(tp) / double(row) : 0.0;
        const double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
        r.macro_precision += r.precision[c];
        r.macro_recall += r.recall[c];
        r.macro_f1 += r.f1[c];
    }
    r.accuracy = double(trace) / double(cm.total);
    r.macro_precision /= double(k);
    r.macro_recall /= double(k);
    r.macro_f1 /= double(k);
    return r;
}

nlohmann::ordered_json metrics_to_json(const MetricsReport& report,
                                       const std::vector<std::string>& label_names) {
    nlohmann::ordered_json j;
    j["accuracy"] = report.accuracy;
    j["macro_precision"] = report.macro_precision;
    j["macro_recall"] = report.macro_recall;
    j["macro_f1"] = report.macro_f1;

    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < report.confusion.n_classes; ++c) {
        nlohmann::ordered_json e;
        e["label"] = c < label_names.size() ? label_names[c] : std::to_string(c);
        e["precision"] = report.precision[c];
        e["recall"] = report.recall[c];
        e["f1"] = report.f1[c];
        e["support"] = report.support[c];
        per_class.push_back(e);
    }
    j["per_class"] = per_class;

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < report.confusion.n_classes; ++t) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < report.confusion.n_classes; ++p)
            row.push_back(report.confusion.at(t, p));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

} // namespace ftl
