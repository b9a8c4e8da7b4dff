#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftl/dataset_io.hpp"
#include "ftl/metrics.hpp"
#include "ftl/neuralnet.hpp"

#include "json.hpp"

namespace ftl {

struct ClientState {
    std::size_t client_id = 0;
    Dataset local_data;
    ModelWeights current_weights;

    std::size_t sample_count() const { return local_data.n_samples(); } // n_i
};

struct ServerState {
    ModelWeights global_weights;
    std::size_t round = 0; // t, incremented once per completed round
    std::vector<std::size_t> client_registry;
    std::size_t total_samples = 0; // n = sum of n_i
};

enum class FedMode { fedsgd, fedavg };

struct RoundConfig {
    FedMode mode = FedMode::fedavg;
    double learning_rate = 0.05;
    std::size_t local_epochs = 1; // fedavg only
    std::size_t batch_size = 32;  // fedavg only; fedsgd is full-batch by definition
    std::uint64_t seed = 0;
};

struct ClientRoundLog {
    std::size_t client_id = 0;
    double loss = 0.0;           // mean local loss at the deployed weights
    double local_accuracy = 0.0; // updated local model on its own data
    std::size_t sample_count = 0;
};

struct RoundLog {
    std::size_t round = 0;
    std::vector<ClientRoundLog> clients;
    MetricsReport server_metrics; // post-aggregation, on held-out data
};

MetricsReport evaluate_weights(const ModelWeights& weights, const Dataset& data);

struct BootstrapResult {
    ServerState server;
    std::vector<double> loss_trace; // per epoch of server pretraining
};

// Initializes the global model and pretrains it on the server share; t = 0.
BootstrapResult bootstrap_server(const ComboNetConfig& config, const Dataset& server_data,
                                 const TrainParams& train_params);

// Value-copies the global weights onto every client.
void deploy_to_clients(const ServerState& server, std::vector<ClientState>& clients);

// Mean loss over all local samples at the client's current weights.
double client_local_loss(const ClientState& client);

// Full-batch mean gradient at the client's current weights; carries n_i.
GradientSet client_gradient(const ClientState& client);

// One gradient-descent step on the server weights with a client gradient.
ModelWeights client_sgd_update(const ModelWeights& server_weights, const GradientSet& grad,
                               double learning_rate);

// Local fine-tuning pass starting from the deployed weights. The shuffle
// stream is derived from (seed, client_id, round) so execution order across
// clients cannot change results.
ModelWeights client_local_train(const ClientState& client, const RoundConfig& config,
                                std::size_t round);

struct WeightedModel {
    ModelWeights weights;
    std::size_t sample_count = 0;
};

// Per-parameter convex combination with coefficients n_i / n.
ModelWeights federated_weighted_average(const std::vector<WeightedModel>& entries);

// deploy -> per-client work (parallel, combined in client order) -> weighted
// average -> t+1 -> evaluation. Throws without touching the server state if
// any client fails.
RoundLog run_round(ServerState& server, std::vector<ClientState>& clients,
                   const RoundConfig& config, const Dataset& eval_data);

struct SimulationConfig {
    ComboNetConfig model;
    TrainParams bootstrap;
    RoundConfig round;
    std::size_t rounds = 2;
    double convergence_tolerance = 1e-6; // early stop on max-abs weight delta
};

struct SimulationResult {
    ServerState server;
    std::vector<ClientState> clients;
    std::vector<double> bootstrap_loss_trace;
    MetricsReport bootstrap_metrics; // evaluation right after bootstrap (t = 0)
    std::vector<RoundLog> rounds;
    bool converged_early = false;
};

SimulationResult run_simulation(const SimulationConfig& config, const Dataset& server_data,
                                const std::vector<Dataset>& client_shares,
                                const Dataset& eval_data);

nlohmann::ordered_json round_log_to_json(const RoundLog& log,
                                         const std::vector<std::string>& label_names);

} // namespace ftl
