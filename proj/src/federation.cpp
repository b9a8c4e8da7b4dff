#include "ftl/federation.hpp"
#include "ftl/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace ftl {

namespace {

Batch full_batch(const Dataset& data) {
    Batch b;
    b.features = data.features;
    b.labels = data.labels;
    return b;
}

} // namespace

MetricsReport evaluate_weights(const ModelWeights& weights, const Dataset& data) {
    const std::vector<int> predicted = predict_classes(weights, data.features);
    return macro_report(confusion(data.labels, predicted, data.n_classes()));
}

BootstrapResult bootstrap_server(const ComboNetConfig& config, const Dataset& server_data,
                                 const TrainParams& train_params) {
    if (server_data.n_samples() == 0)
        throw Error(ErrorCode::empty_input, "bootstrap_server: empty server data");

    BootstrapResult out;
    TrainResult trained = train_epochs(init_model(config), server_data, train_params);
    out.server.global_weights = std::move(trained.weights);
    out.server.round = 0;
    out.loss_trace = std::move(trained.epoch_losses);
    return out;
}

void deploy_to_clients(const ServerState& server, std::vector<ClientState>& clients) {
    if (server.client_registry.size() != clients.size())
        throw Error(ErrorCode::invalid_config,
                    "deploy_to_clients: registry does not match client list");
    for (std::size_t i = 0; i < clients.size(); ++i) {
        if (clients[i].client_id != server.client_registry[i])
            throw Error(ErrorCode::invalid_config,
                        "deploy_to_clients: client order does not match registry");
        if (!clients[i].current_weights.blocks.empty() &&
            clients[i].current_weights.fingerprint != server.global_weights.fingerprint)
            throw Error(ErrorCode::fingerprint_mismatch,
                        "deploy_to_clients: client " + std::to_string(clients[i].client_id) +
                            " holds weights of a different configuration");
        clients[i].current_weights = server.global_weights;
    }
}

double client_local_loss(const ClientState& client) {
    if (client.local_data.n_samples() == 0)
        throw Error(ErrorCode::empty_input,
                    "client " + std::to_string(client.client_id) + " has no local data");
    return mean_loss(client.current_weights, full_batch(client.local_data));
}

GradientSet client_gradient(const ClientState& client) {
    if (client.local_data.n_samples() == 0)
        throw Error(ErrorCode::empty_input,
                    "client " + std::to_string(client.client_id) + " has no local data");
    return loss_and_gradient(client.current_weights, full_batch(client.local_data)).grads;
}

ModelWeights client_sgd_update(const ModelWeights& server_weights, const GradientSet& grad,
                               double learning_rate) {
    return sgd_step(server_weights, grad, learning_rate);
}

ModelWeights client_local_train(const ClientState& client, const RoundConfig& config,
                                std::size_t round) {
    TrainParams params;
    params.epochs = config.local_epochs;
    params.batch_size = config.batch_size;
    params.learning_rate = config.learning_rate;
    params.shuffle_seed = mix_seed({config.seed, client.client_id + 1, round + 1});
    return train_epochs(client.current_weights, client.local_data, params).weights;
}

ModelWeights federated_weighted_average(const std::vector<WeightedModel>& entries) {
    if (entries.empty())
        throw Error(ErrorCode::empty_input, "federated_weighted_average: no entries");

    std::size_t total = 0;
    for (const auto& e : entries) {
        if (e.sample_count == 0)
            throw Error(ErrorCode::empty_input,
                        "federated_weighted_average: entry with zero samples");
        total += e.sample_count;
    }
    const double n = double(total);

    const ModelWeights& first = entries[0].weights;
    for (const auto& e : entries) {
        if (e.weights.blocks.size() != first.blocks.size())
            throw Error(ErrorCode::dimension_mismatch,
                        "federated_weighted_average: block count mismatch");
        for (std::size_t b = 0; b < first.blocks.size(); ++b)
            if (e.weights.blocks[b].weight_shape != first.blocks[b].weight_shape ||
                e.weights.blocks[b].bias.size() != first.blocks[b].bias.size())
                throw Error(ErrorCode::dimension_mismatch,
                            "federated_weighted_average: shape mismatch in block " +
                                first.blocks[b].layer_id);
    }

    ModelWeights out = first;
    for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        auto& wv = out.blocks[b].weights;
        auto& bv = out.blocks[b].bias;
        std::fill(wv.begin(), wv.end(), 0.0);
        std::fill(bv.begin(), bv.end(), 0.0);
        for (const auto& e : entries) {
            const double coeff = double(e.sample_count) / n;
            const auto& ew = e.weights.blocks[b].weights;
            const auto& eb = e.weights.blocks[b].bias;
            for (std::size_t i = 0; i < wv.size(); ++i) wv[i] += coeff * ew[i];
            for (std::size_t i = 0; i < bv.size(); ++i) bv[i] += coeff * eb[i];
        }
    }
    return out;
}

RoundLog run_round(ServerState& server, std::vector<ClientState>& clients,
                   const RoundConfig& config, const Dataset& eval_data) {
    deploy_to_clients(server, clients);

    const std::size_t n_clients = clients.size();
    const std::size_t t = server.round;
    std::vector<ModelWeights> updated(n_clients);
    std::vector<ClientRoundLog> logs(n_clients);
    std::vector<std::string> errors(n_clients);

    // Independent work items; results land in per-client slots and are
    // aggregated below in client order, so this loop is free to parallelize.
#pragma omp parallel for schedule(static) if (parallel_enabled() && n_clients > 1)
    for (long long idx = 0; idx < (long long)n_clients; ++idx) {
        const std::size_t i = std::size_t(idx);
        try {
            ClientState& client = clients[i];
            ClientRoundLog log;
            log.client_id = client.client_id;
            log.sample_count = client.sample_count();
            log.loss = client_local_loss(client); // F_i at the deployed weights

            if (config.mode == FedMode::fedsgd) {
                const GradientSet grad = client_gradient(client);
                updated[i] = client_sgd_update(server.global_weights, grad,
                                               config.learning_rate);
            } else {
                updated[i] = client_local_train(client, config, t);
            }

            const std::vector<int> pred =
                predict_classes(updated[i], client.local_data.features);
            log.local_accuracy =
                macro_report(confusion(client.local_data.labels, pred,
                                       client.local_data.n_classes()))
                    .accuracy;
            logs[i] = log;
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty()) errors[i] = "client failure";
        }
    }

    for (std::size_t i = 0; i < n_clients; ++i)
        if (!errors[i].empty())
            throw Error(ErrorCode::empty_input,
                        "round aborted, client " + std::to_string(clients[i].client_id) +
                            " failed: " + errors[i]);

    std::vector<WeightedModel> entries;
    entries.reserve(n_clients);
    for (std::size_t i = 0; i < n_clients; ++i) {
        clients[i].current_weights = updated[i];
        entries.push_back({std::move(updated[i]), clients[i].sample_count()});
    }

    server.global_weights = federated_weighted_average(entries);
    server.round = t + 1;

    RoundLog log;
    log.round = server.round;
    log.clients = std::move(logs);
    log.server_metrics = evaluate_weights(server.global_weights, eval_data);
    return log;
}

SimulationResult run_simulation(const SimulationConfig& config, const Dataset& server_data,
                                const std::vector<Dataset>& client_shares,
                                const Dataset& eval_data) {
    SimulationResult result;

    BootstrapResult boot = bootstrap_server(config.model, server_data, config.bootstrap);
    result.server = std::move(boot.server);
    result.bootstrap_loss_trace = std::move(boot.loss_trace);

    result.clients.reserve(client_shares.size());
    for (std::size_t i = 0; i < client_shares.size(); ++i) {
        ClientState c;
        c.client_id = i;
        c.local_data = client_shares[i];
        result.clients.push_back(std::move(c));
        result.server.client_registry.push_back(i);
        result.server.total_samples += client_shares[i].n_samples();
    }

    result.bootstrap_metrics = evaluate_weights(result.server.global_weights, eval_data);

    for (std::size_t r = 0; r < config.rounds; ++r) {
        const ModelWeights before = result.server.global_weights;
        result.rounds.push_back(
            run_round(result.server, result.clients, config.round, eval_data));
        const double delta = max_abs_weight_delta(before, result.server.global_weights);
        if (delta < config.convergence_tolerance) {
            result.converged_early = true;
            break;
        }
    }
    return result;
}

nlohmann::ordered_json round_log_to_json(const RoundLog& log,
                                         const std::vector<std::string>& label_names) {
    nlohmann::ordered_json j;
    j["phase"] = "round";
    j["t"] = log.round;
    nlohmann::ordered_json clients = nlohmann::ordered_json::array();
    for (const auto& c : log.clients) {
        nlohmann::ordered_json e;
        e["client_id"] = c.client_id;
        e["loss"] = c.loss;
        e["local_accuracy"] = c.local_accuracy;
        e["n"] = c.sample_count;
        clients.push_back(e);
    }
    j["clients"] = clients;
    j["server"] = metrics_to_json(log.server_metrics, label_names);
    return j;
}

} // namespace ftl
