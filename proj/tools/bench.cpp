// Times the OpenMP kernels against their serial execution and against the
// naive reference implementations, checking that outputs agree.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "ftl/federation.hpp"
#include "ftl/neuralnet.hpp"
#include "ftl/parallel.hpp"
#include "ftl/preprocess.hpp"
#include "ftl/reference.hpp"
#include "ftl/synth.hpp"

namespace {

double time_ms(const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

double max_abs_diff(const ftl::Matrix& a, const ftl::Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   max|diff| %.3g\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

} // namespace

int main() {
    using namespace ftl;
    std::printf("threads available: %d\n\n", max_threads());

    // correlation matrix kernel
    {
        const Dataset data = make_blobs(4000, 256, 4, 7);
        set_parallel_enabled(false);
        CorrelationMatrix serial;
        const double t_serial = time_ms([&] { serial = pearson_correlation_matrix(data); });
        set_parallel_enabled(true);
        CorrelationMatrix parallel;
        const double t_parallel = time_ms([&] { parallel = pearson_correlation_matrix(data); });
        const double t_ref = time_ms([&] { (void)ref::pearson_matrix(data); });
        report("pearson_correlation_matrix", t_serial, t_parallel,
               max_abs_diff(serial.values, parallel.values));
        std::printf("%-28s naive reference %6.2f ms\n", "", t_ref);
    }

    // forward + backward kernels
    {
        ComboNetConfig cfg;
        cfg.input_dim = 32;
        cfg.stem_channels = 8;
        cfg.residual_blocks = 2;
        cfg.kernel_size = 3;
        cfg.dense_hidden = {64};
        cfg.n_classes = 6;
        cfg.init_seed = 11;
        const ModelWeights model = init_model(cfg);

        const Dataset blob = make_blobs(2048, cfg.input_dim, cfg.n_classes, 13);
        Batch batch{blob.features, blob.labels};

        set_parallel_enabled(false);
        LossAndGradient serial_out;
        const double t_serial = time_ms([&] { serial_out = loss_and_gradient(model, batch); });
        set_parallel_enabled(true);
        LossAndGradient parallel_out;
        const double t_parallel =
            time_ms([&] { parallel_out = loss_and_gradient(model, batch); });

        double diff = 0.0;
        for (std::size_t b = 0; b < serial_out.grads.blocks.size(); ++b)
            for (std::size_t i = 0; i < serial_out.grads.blocks[b].weights.size(); ++i)
                diff = std::max(diff, std::fabs(serial_out.grads.blocks[b].weights[i] -
                                                parallel_out.grads.blocks[b].weights[i]));
        report("forward+backward (b=2048)", t_serial, t_parallel, diff);
    }

    // one federated round, client phase
    {
        ComboNetConfig cfg;
        cfg.input_dim = 32;
        cfg.stem_channels = 8;
        cfg.residual_blocks = 2;
        cfg.kernel_size = 3;
        cfg.dense_hidden = {32};
        cfg.n_classes = 4;
        cfg.init_seed = 3;

        const Dataset blob = make_blobs(8000, cfg.input_dim, cfg.n_classes, 17);
        SplitSpec spec{0.2, 0.5, 4, 99};
        TrainTestSplit tt = split_train_test(blob, spec);
        ClientServerSplit cs = partition_client_server(tt.train, spec);
        std::vector<Dataset> shares = partition_among_clients(cs.client_pool, 4, 99);

        RoundConfig round;
        round.mode = FedMode::fedavg;
        round.local_epochs = 2;
        round.seed = 5;

        BootstrapResult boot =
            bootstrap_server(cfg, cs.server_data, TrainParams{1, 64, 0.05, 1});
        for (std::size_t i = 0; i < shares.size(); ++i) {
            boot.server.client_registry.push_back(i);
            boot.server.total_samples += shares[i].n_samples();
        }

        auto run_once = [&] {
            ServerState server = boot.server; // fresh copy per run
            std::vector<ClientState> clients;
            for (std::size_t i = 0; i < shares.size(); ++i)
                clients.push_back(ClientState{i, shares[i], {}});
            run_round(server, clients, round, tt.test);
            return server.global_weights;
        };

        set_parallel_enabled(false);
        ModelWeights serial_w;
        const double t_serial = time_ms([&] { serial_w = run_once(); });
        set_parallel_enabled(true);
        ModelWeights parallel_w;
        const double t_parallel = time_ms([&] { parallel_w = run_once(); });
        report("federated round (4 clients)", t_serial, t_parallel,
               max_abs_weight_delta(serial_w, parallel_w));
    }

    return 0;
}
