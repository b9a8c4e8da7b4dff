#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftl/baselines.hpp"
#include "ftl/dataset_io.hpp"
#include "ftl/federation.hpp"
#include "ftl/preprocess.hpp"

#include "json.hpp"

namespace ftl {

struct ModelSettings {
    std::size_t stem_channels = 8;
    std::size_t residual_blocks = 2;
    std::size_t kernel_size = 3;
    std::vector<std::size_t> dense_hidden = {32};
};

struct FederationSettings {
    FedMode mode = FedMode::fedavg;
    std::size_t rounds = 2;
    double learning_rate = 0.05;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 32;
    std::size_t server_epochs = 10;
    std::size_t server_batch_size = 32;
    double server_learning_rate = 0.05;
    double convergence_tolerance = 1e-6;
};

struct ExperimentConfig {
    std::string dataset_path;
    std::string label_column;
    PreprocessConfig preprocess;
    double test_fraction = 0.2;
    double server_fraction = 0.5;
    std::size_t n_clients = 2;
    ClientSplitMode client_split = ClientSplitMode::equal;
    double dirichlet_alpha = 0.5;
    ModelSettings model;
    FederationSettings federation;
    std::vector<BaselineKind> baseline_kinds = {BaselineKind::lr, BaselineKind::gnb,
                                                BaselineKind::sgd, BaselineKind::rf};
    BaselineHyperparams baseline_hp;
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    SplitSpec split_spec() const {
        return SplitSpec{test_fraction, server_fraction, n_clients, seed};
    }
};

// Strict parse: unknown keys are rejected at every level.
ExperimentConfig parse_config_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Processed datasets as written by cmd_preprocess: numeric feature columns
// plus the original label strings. label_names fixes the encoding so train,
// test and evaluation splits agree even when a split is missing a class;
// pass an empty list to derive it lexicographically from the file.
Dataset load_processed_csv(const std::string& path, const std::string& label_column,
                           const std::vector<std::string>& label_names);

// clean/encode/select + train-test split + scaling; writes
// processed_train.csv, processed_test.csv and preprocess_report.json.
void cmd_preprocess(const ExperimentConfig& config, const std::string& out_dir);

// Runs the federated simulation on the processed artifacts; writes
// rounds.jsonl, final_weights.ftlw and federated_metrics.json.
void cmd_train_federated(const ExperimentConfig& config, const std::string& out_dir);

// Fits each requested baseline; writes baseline_<kind>_metrics.json per kind
// and comparison.json (with an ftl row when a federated run artifact exists).
void cmd_train_baselines(const ExperimentConfig& config, const std::string& out_dir);

// Scores a weights file on a processed dataset; writes evaluate_metrics.json.
void cmd_evaluate(const ExperimentConfig& config, const std::string& out_dir,
                  const std::string& weights_path, const std::string& data_path);

// Exit codes: 0 success, 1 runtime failure, 2 config/validation error.
int run_cli(int argc, const char* const* argv);

nlohmann::ordered_json read_json_file(const std::string& path);

} // namespace ftl
