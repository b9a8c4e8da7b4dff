#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ftl/common.hpp"
#include "ftl/dataset_io.hpp"

#include "json.hpp"

namespace ftl {

enum class DropReason { constant, non_finite, low_correlation };

const char* drop_reason_name(DropReason reason);

struct DroppedColumn {
    std::string name;
    DropReason reason;
    std::string detail;
};

struct ScalerParams {
    std::vector<double> min;
    std::vector<double> max;
};

// Square matrix over the selected features plus the label as last row/column.
struct CorrelationMatrix {
    Matrix values;
    std::vector<std::string> order; // feature names, then the label column name

    std::size_t n_features() const { return order.empty() ? 0 : order.size() - 1; }
    double label_correlation(std::size_t feature) const {
        return values(feature, order.size() - 1);
    }
};

// Audit trail for the raw-table -> model-ready-dataset transformation.
struct PreprocessReport {
    std::string label_column;
    std::vector<std::string> original_columns;
    std::vector<DroppedColumn> dropped_columns;
    std::size_t dropped_rows = 0;
    // (column, value->code) in column order; codes are lexicographic ranks
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, int>>>> encoding_maps;
    std::vector<std::string> selected_features;
    std::vector<std::string> label_names;
    ScalerParams scaler;
    std::vector<std::string> warnings;
};

nlohmann::ordered_json report_to_json(const PreprocessReport& report);

struct PreprocessConfig {
    double nonfinite_threshold = 0.0; // any non-finite cell drops the column
    double label_threshold = 0.05;    // tau_l
    double redundancy_threshold = 0.95; // tau_r
    std::size_t max_cardinality = 256;
};

struct CleanResult {
    RawTable table;
    std::vector<DroppedColumn> dropped_columns;
    std::size_t dropped_rows = 0;
};

// Drops constant columns, then columns whose non-finite cell fraction exceeds
// the threshold, then any remaining rows that still carry a non-finite cell.
// `protect` (the label column) is never dropped.
CleanResult clean_columns(const RawTable& table, double nonfinite_threshold = 0.0,
                          const std::string& protect = "");

struct EncodedFeatures {
    Matrix features;
    std::vector<FeatureMeta> feature_meta;
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, int>>>> encoding_maps;
};

// Numeric columns parse to doubles; anything else becomes ordinal codes
// assigned lexicographically over the distinct values.
EncodedFeatures encode_categorical(const RawTable& table, const std::string& label_column,
                                   std::size_t max_cardinality = 256);

// Population-form Pearson over every feature pair plus the label (cast to
// real). Parallelized over entry pairs; each entry is written exactly once so
// thread count cannot change the result.
CorrelationMatrix pearson_correlation_matrix(const Dataset& data);

struct SelectionPolicy {
    double label_threshold = 0.05;
    double redundancy_threshold = 0.95;
};

struct SelectionResult {
    std::vector<std::string> selected; // original column order
    std::vector<DroppedColumn> dropped;
};

SelectionResult select_features(const CorrelationMatrix& corr, const SelectionPolicy& policy);

ScalerParams fit_minmax_scaler(const Dataset& train);

// x' = (x - min) / (max - min); degenerate features map to 0, test values are
// not clamped.
Dataset apply_scaler(const Dataset& data, const ScalerParams& params);

struct PipelineResult {
    Dataset dataset; // cleaned, encoded, feature-selected; not yet scaled
    PreprocessReport report; // scaler left empty until fit on the train split
};

// clean -> encode -> correlation -> select, producing the unscaled dataset.
// Scaling is fit on the train split only, after the caller splits.
PipelineResult preprocess_table(const RawTable& table, const std::string& label_column,
                                const PreprocessConfig& config);

} // namespace ftl
