#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ftl/common.hpp"

namespace ftl {

// Raw CSV contents, cell text preserved verbatim.
struct RawTable {
    std::vector<std::string> column_names;
    std::vector<std::string> cells; // row-major, row_count * col_count
    std::size_t row_count = 0;
    std::size_t col_count = 0;

    const std::string& cell(std::size_t r, std::size_t c) const {
        return cells[r * col_count + c];
    }
    bool has_column(const std::string& name) const;
    std::size_t column_index(const std::string& name) const; // throws missing_column
};

enum class FeatureKind { numeric, categorical_encoded };

struct FeatureMeta {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
};

// The universal currency of the pipeline: numeric features + class labels.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<FeatureMeta> feature_meta;
    std::vector<std::string> label_names;

    std::size_t n_samples() const { return features.rows; }
    std::size_t n_features() const { return features.cols; }
    std::size_t n_classes() const { return label_names.size(); }
};

struct SplitSpec {
    double test_fraction = 0.2;   // (0, 0.5); keeps the train side strictly larger
    double server_fraction = 0.5; // (0, 1)
    std::size_t n_clients = 2;
    std::uint64_t seed = 0;

    void validate() const; // throws invalid_config
};

RawTable load_csv(const std::string& path, const std::string& label_column);

struct LabelEncoding {
    std::vector<int> labels;
    std::vector<std::string> label_names; // sorted lexicographically
};

LabelEncoding encode_labels(const RawTable& table, const std::string& label_column);

Dataset select_rows(const Dataset& data, const std::vector<std::size_t>& indices);

// Moves `second_count` rows into the second part, allocated per class by
// largest remainder over class sizes and shuffled inside each class by a
// seeded permutation. With min_keep_first=1 every class keeps at least one
// row in the first part (single-sample classes stay there entirely and a
// warning is recorded).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_partition_indices(const std::vector<int>& labels, std::size_t n_classes,
                             std::size_t second_count, std::uint64_t seed,
                             std::size_t min_keep_first,
                             std::vector<std::string>* warnings = nullptr);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
    std::vector<std::string> warnings;
};

TrainTestSplit split_train_test(const Dataset& data, const SplitSpec& spec);

struct ClientServerSplit {
    Dataset server_data;
    Dataset client_pool;
};

ClientServerSplit partition_client_server(const Dataset& train, const SplitSpec& spec);

enum class ClientSplitMode { equal, dirichlet };

// Equal mode deals out shares whose sizes differ by at most one; dirichlet
// mode draws per-class client proportions from Dirichlet(alpha) for non-IID
// experiments.
std::vector<std::vector<std::size_t>> client_share_indices(std::size_t pool_size,
                                                           const std::vector<int>& labels,
                                                           std::size_t n_clients,
                                                           std::uint64_t seed,
                                                           ClientSplitMode mode,
                                                           double alpha);

std::vector<Dataset> partition_among_clients(const Dataset& client_pool, std::size_t n_clients,
                                             std::uint64_t seed,
                                             ClientSplitMode mode = ClientSplitMode::equal,
                                             double alpha = 0.5);

} // namespace ftl
