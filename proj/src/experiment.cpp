#include "ftl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

namespace ftl {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw Error(ErrorCode::invalid_config,
                        "unknown key \"" + it.key() + "\" in " + where);
    }
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// Timestamps and durations live only here; determinism checks hash "results".
ordered_json make_meta(const std::string& command, double duration_seconds) {
    ordered_json meta;
    meta["command"] = command;
    meta["generated_at"] = iso_timestamp();
    meta["duration_seconds"] = duration_seconds;
    return meta;
}

void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::io_error, "short write to " + path);
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

void write_processed_csv(const std::string& path, const Dataset& data,
                         const std::string& label_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    for (const auto& meta : data.feature_meta) out << csv_escape(meta.name) << ',';
    out << csv_escape(label_column) << '\n';
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
        for (std::size_t j = 0; j < data.n_features(); ++j)
            out << format_value(data.features(i, j)) << ',';
        out << csv_escape(data.label_names[std::size_t(data.labels[i])]) << '\n';
    }
    if (!out) throw Error(ErrorCode::io_error, "short write to " + path);
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

ordered_json metrics_summary(const MetricsReport& m) {
    ordered_json j;
    j["accuracy"] = m.accuracy;
    j["macro_precision"] = m.macro_precision;
    j["macro_recall"] = m.macro_recall;
    j["macro_f1"] = m.macro_f1;
    return j;
}

std::vector<std::string> label_names_from_report(const std::string& out_dir) {
    const std::string report_path = out_dir + "/preprocess_report.json";
    if (!fs::exists(report_path)) return {};
    const ordered_json j = read_json_file(report_path);
    if (!j.contains("results") || !j["results"].contains("label_names")) return {};
    return j["results"]["label_names"].get<std::vector<std::string>>();
}

ComboNetConfig model_config_for(const ExperimentConfig& config, std::size_t input_dim,
                                std::size_t n_classes) {
    ComboNetConfig mc;
    mc.input_dim = input_dim;
    mc.stem_channels = config.model.stem_channels;
    mc.residual_blocks = config.model.residual_blocks;
    mc.kernel_size = config.model.kernel_size;
    mc.dense_hidden = config.model.dense_hidden;
    mc.n_classes = n_classes;
    mc.init_seed = mix_seed({config.seed, 21});
    return mc;
}

} // namespace

ordered_json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "cannot open " + path);
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path + ": " + e.what());
    }
}

ExperimentConfig parse_config_json(const nlohmann::json& j) {
    try {
        check_keys(j,
                   {"schema_version", "seed", "dataset", "preprocess", "split", "model",
                    "federation", "baselines", "output_dir"},
                   "config root");
        if (j.contains("schema_version") && j["schema_version"].get<int>() != 1)
            throw Error(ErrorCode::invalid_config, "unsupported config schema_version");

        ExperimentConfig c;
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();

        if (!j.contains("dataset"))
            throw Error(ErrorCode::invalid_config, "config missing \"dataset\" section");
        const auto& ds = j["dataset"];
        check_keys(ds, {"path", "label_column"}, "dataset");
        if (!ds.contains("path") || !ds.contains("label_column"))
            throw Error(ErrorCode::invalid_config,
                        "dataset section needs \"path\" and \"label_column\"");
        c.dataset_path = ds["path"].get<std::string>();
        c.label_column = ds["label_column"].get<std::string>();

        if (j.contains("preprocess")) {
            const auto& p = j["preprocess"];
            check_keys(p,
                       {"nonfinite_threshold", "label_threshold", "redundancy_threshold",
                        "max_cardinality"},
                       "preprocess");
            if (p.contains("nonfinite_threshold"))
                c.preprocess.nonfinite_threshold = p["nonfinite_threshold"].get<double>();
            if (p.contains("label_threshold"))
                c.preprocess.label_threshold = p["label_threshold"].get<double>();
            if (p.contains("redundancy_threshold"))
                c.preprocess.redundancy_threshold = p["redundancy_threshold"].get<double>();
            if (p.contains("max_cardinality"))
                c.preprocess.max_cardinality = p["max_cardinality"].get<std::size_t>();
        }

        if (j.contains("split")) {
            const auto& s = j["split"];
            check_keys(s,
                       {"test_fraction", "server_fraction", "n_clients", "client_split",
                        "dirichlet_alpha"},
                       "split");
            if (s.contains("test_fraction")) c.test_fraction = s["test_fraction"].get<double>();
            if (s.contains("server_fraction"))
                c.server_fraction = s["server_fraction"].get<double>();
            if (s.contains("n_clients")) c.n_clients = s["n_clients"].get<std::size_t>();
            if (s.contains("client_split")) {
                const std::string mode = s["client_split"].get<std::string>();
                if (mode == "equal") c.client_split = ClientSplitMode::equal;
                else if (mode == "dirichlet") c.client_split = ClientSplitMode::dirichlet;
                else
                    throw Error(ErrorCode::invalid_config,
                                "client_split must be \"equal\" or \"dirichlet\"");
            }
            if (s.contains("dirichlet_alpha"))
                c.dirichlet_alpha = s["dirichlet_alpha"].get<double>();
        }

        if (j.contains("model")) {
            const auto& m = j["model"];
            check_keys(m, {"stem_channels", "residual_blocks", "kernel_size", "dense_hidden"},
                       "model");
            if (m.contains("stem_channels"))
                c.model.stem_channels = m["stem_channels"].get<std::size_t>();
            if (m.contains("residual_blocks"))
                c.model.residual_blocks = m["residual_blocks"].get<std::size_t>();
            if (m.contains("kernel_size"))
                c.model.kernel_size = m["kernel_size"].get<std::size_t>();
            if (m.contains("dense_hidden"))
                c.model.dense_hidden = m["dense_hidden"].get<std::vector<std::size_t>>();
        }

        if (j.contains("federation")) {
            const auto& f = j["federation"];
            check_keys(f,
                       {"mode", "rounds", "learning_rate", "local_epochs", "batch_size",
                        "server_epochs", "server_batch_size", "server_learning_rate",
                        "convergence_tolerance"},
                       "federation");
            if (f.contains("mode")) {
                const std::string mode = f["mode"].get<std::string>();
                if (mode == "fedavg") c.federation.mode = FedMode::fedavg;
                else if (mode == "fedsgd") c.federation.mode = FedMode::fedsgd;
                else
                    throw Error(ErrorCode::invalid_config,
                                "federation mode must be \"fedavg\" or \"fedsgd\"");
            }
            if (f.contains("rounds")) c.federation.rounds = f["rounds"].get<std::size_t>();
            if (f.contains("learning_rate"))
                c.federation.learning_rate = f["learning_rate"].get<double>();
            if (f.contains("local_epochs"))
                c.federation.local_epochs = f["local_epochs"].get<std::size_t>();
            if (f.contains("batch_size"))
                c.federation.batch_size = f["batch_size"].get<std::size_t>();
            if (f.contains("server_epochs"))
                c.federation.server_epochs = f["server_epochs"].get<std::size_t>();
            if (f.contains("server_batch_size"))
                c.federation.server_batch_size = f["server_batch_size"].get<std::size_t>();
            if (f.contains("server_learning_rate"))
                c.federation.server_learning_rate = f["server_learning_rate"].get<double>();
            if (f.contains("convergence_tolerance"))
                c.federation.convergence_tolerance = f["convergence_tolerance"].get<double>();
        }

        if (j.contains("baselines")) {
            const auto& b = j["baselines"];
            check_keys(b,
                       {"kinds", "lr_learning_rate", "lr_epochs", "sgd_learning_rate",
                        "sgd_batch_size", "sgd_epochs", "rf_trees", "rf_max_depth",
                        "gnb_variance_floor"},
                       "baselines");
            if (b.contains("kinds")) {
                c.baseline_kinds.clear();
                for (const auto& k : b["kinds"])
                    c.baseline_kinds.push_back(baseline_kind_from_string(k.get<std::string>()));
            }
            auto& hp = c.baseline_hp;
            if (b.contains("lr_learning_rate"))
                hp.lr_learning_rate = b["lr_learning_rate"].get<double>();
            if (b.contains("lr_epochs")) hp.lr_epochs = b["lr_epochs"].get<std::size_t>();
            if (b.contains("sgd_learning_rate"))
                hp.sgd_learning_rate = b["sgd_learning_rate"].get<double>();
            if (b.contains("sgd_batch_size"))
                hp.sgd_batch_size = b["sgd_batch_size"].get<std::size_t>();
            if (b.contains("sgd_epochs")) hp.sgd_epochs = b["sgd_epochs"].get<std::size_t>();
            if (b.contains("rf_trees")) hp.rf_trees = b["rf_trees"].get<std::size_t>();
            if (b.contains("rf_max_depth"))
                hp.rf_max_depth = b["rf_max_depth"].get<std::size_t>();
            if (b.contains("gnb_variance_floor"))
                hp.gnb_variance_floor = b["gnb_variance_floor"].get<double>();
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_json(read_json_file(path));
}

Dataset load_processed_csv(const std::string& path, const std::string& label_column,
                           const std::vector<std::string>& label_names) {
    const RawTable table = load_csv(path, label_column);
    const std::size_t label_col = table.column_index(label_column);

    Dataset out;
    if (label_names.empty()) {
        LabelEncoding enc = encode_labels(table, label_column);
        out.labels = std::move(enc.labels);
        out.label_names = std::move(enc.label_names);
    } else {
        out.label_names = label_names;
        out.labels.resize(table.row_count);
        for (std::size_t r = 0; r < table.row_count; ++r) {
            const std::string& v = table.cell(r, label_col);
            const auto it = std::find(label_names.begin(), label_names.end(), v);
            if (it == label_names.end())
                throw Error(ErrorCode::empty_label,
                            "label \"" + v + "\" at data row " + std::to_string(r + 1) +
                                " is not in the recorded label set");
            out.labels[r] = int(it - label_names.begin());
        }
    }

    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < table.col_count; ++c)
        if (c != label_col) feature_cols.push_back(c);

    out.features = Matrix(table.row_count, feature_cols.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
        const std::size_t c = feature_cols[f];
        out.feature_meta.push_back({table.column_names[c], FeatureKind::numeric});
        for (std::size_t r = 0; r < table.row_count; ++r) {
            double v;
            if (!parse_double(table.cell(r, c), v))
                throw Error(ErrorCode::invalid_config,
                            path + ": non-numeric cell in column " + table.column_names[c] +
                                " at data row " + std::to_string(r + 1));
            out.features(r, f) = v;
        }
    }
    return out;
}

void cmd_preprocess(const ExperimentConfig& config, const std::string& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);

    const RawTable raw = load_csv(config.dataset_path, config.label_column);
    PipelineResult pipeline = preprocess_table(raw, config.label_column, config.preprocess);

    TrainTestSplit split = split_train_test(pipeline.dataset, config.split_spec());
    for (const auto& w : split.warnings) pipeline.report.warnings.push_back(w);

    pipeline.report.scaler = fit_minmax_scaler(split.train);
    const Dataset train = apply_scaler(split.train, pipeline.report.scaler);
    const Dataset test = apply_scaler(split.test, pipeline.report.scaler);

    write_processed_csv(out_dir + "/processed_train.csv", train, config.label_column);
    write_processed_csv(out_dir + "/processed_test.csv", test, config.label_column);

    ordered_json doc;
    doc["meta"] = make_meta("preprocess", timer.seconds());
    doc["results"] = report_to_json(pipeline.report);
    write_json_file(out_dir + "/preprocess_report.json", doc);
}

void cmd_train_federated(const ExperimentConfig& config, const std::string& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);

    const std::vector<std::string> names = label_names_from_report(out_dir);
    const Dataset train =
        load_processed_csv(out_dir + "/processed_train.csv", config.label_column, names);
    const Dataset test =
        load_processed_csv(out_dir + "/processed_test.csv", config.label_column, names);

    const SplitSpec spec = config.split_spec();
    ClientServerSplit cs = partition_client_server(train, spec);
    std::vector<Dataset> shares = partition_among_clients(
        cs.client_pool, config.n_clients, config.seed, config.client_split,
        config.dirichlet_alpha);

    SimulationConfig sim;
    sim.model = model_config_for(config, train.n_features(), train.n_classes());
    sim.bootstrap = TrainParams{config.federation.server_epochs,
                                config.federation.server_batch_size,
                                config.federation.server_learning_rate,
                                mix_seed({config.seed, 22})};
    sim.round = RoundConfig{config.federation.mode, config.federation.learning_rate,
                            config.federation.local_epochs, config.federation.batch_size,
                            mix_seed({config.seed, 23})};
    sim.rounds = config.federation.rounds;
    sim.convergence_tolerance = config.federation.convergence_tolerance;

    SimulationResult result = run_simulation(sim, cs.server_data, shares, test);

    {
        std::ofstream jsonl(out_dir + "/rounds.jsonl", std::ios::binary);
        if (!jsonl) throw Error(ErrorCode::io_error, "cannot write rounds.jsonl");
        ordered_json boot;
        boot["phase"] = "bootstrap";
        boot["t"] = 0;
        boot["loss_trace"] = result.bootstrap_loss_trace;
        boot["server"] = metrics_to_json(result.bootstrap_metrics, train.label_names);
        jsonl << boot.dump() << '\n';
        for (const auto& log : result.rounds)
            jsonl << round_log_to_json(log, train.label_names).dump() << '\n';
    }

    save_weights(result.server.global_weights, out_dir + "/final_weights.ftlw");

    const MetricsReport& final_metrics =
        result.rounds.empty() ? result.bootstrap_metrics
                              : result.rounds.back().server_metrics;

    ordered_json results;
    results["label_names"] = train.label_names;
    results["mode"] = config.federation.mode == FedMode::fedavg ? "fedavg" : "fedsgd";
    results["n_clients"] = shares.size();
    results["client_sample_counts"] = [&] {
        std::vector<std::size_t> ns;
        for (const auto& s : shares) ns.push_back(s.n_samples());
        return ns;
    }();
    results["bootstrap"] = metrics_to_json(result.bootstrap_metrics, train.label_names);
    ordered_json rounds = ordered_json::array();
    for (const auto& log : result.rounds)
        rounds.push_back(round_log_to_json(log, train.label_names));
    results["rounds"] = rounds;
    results["converged_early"] = result.converged_early;
    results["final"] = metrics_to_json(final_metrics, train.label_names);

    ordered_json doc;
    doc["meta"] = make_meta("train-federated", timer.seconds());
    doc["results"] = results;
    write_json_file(out_dir + "/federated_metrics.json", doc);
}

void cmd_train_baselines(const ExperimentConfig& config, const std::string& out_dir) {
    Timer timer;
    fs::create_directories(out_dir);

    const std::vector<std::string> names = label_names_from_report(out_dir);
    const Dataset train =
        load_processed_csv(out_dir + "/processed_train.csv", config.label_column, names);
    const Dataset test =
        load_processed_csv(out_dir + "/processed_test.csv", config.label_column, names);

    ordered_json table = ordered_json::array();
    for (std::size_t i = 0; i < config.baseline_kinds.size(); ++i) {
        const BaselineKind kind = config.baseline_kinds[i];
        const BaselineModel model = fit_baseline(kind, train, config.baseline_hp,
                                                 mix_seed({config.seed, 31, i}));
        const std::vector<int> pred = predict_baseline(model, test.features);
        const MetricsReport metrics =
            macro_report(confusion(test.labels, pred, test.n_classes()));

        ordered_json doc;
        doc["meta"] = make_meta(std::string("train-baselines/") + baseline_kind_name(kind),
                                timer.seconds());
        doc["results"] = metrics_to_json(metrics, test.label_names);
        write_json_file(out_dir + "/baseline_" + baseline_kind_name(kind) + "_metrics.json",
                        doc);

        ordered_json entry;
        entry["kind"] = baseline_kind_name(kind);
        entry.update(metrics_summary(metrics));
        table.push_back(entry);
    }

    // include the federated run when its artifact is present
    const std::string fed_path = out_dir + "/federated_metrics.json";
    if (fs::exists(fed_path)) {
        const ordered_json fed = read_json_file(fed_path);
        if (fed.contains("results") && fed["results"].contains("final")) {
            const auto& final_metrics = fed["results"]["final"];
            ordered_json entry;
            entry["kind"] = "ftl";
            entry["accuracy"] = final_metrics["accuracy"];
            entry["macro_precision"] = final_metrics["macro_precision"];
            entry["macro_recall"] = final_metrics["macro_recall"];
            entry["macro_f1"] = final_metrics["macro_f1"];
            table.push_back(entry);
        }
    }

    ordered_json doc;
    doc["meta"] = make_meta("train-baselines", timer.seconds());
    doc["results"] = ordered_json{{"models", table}};
    write_json_file(out_dir + "/comparison.json", doc);
}

void cmd_evaluate(const ExperimentConfig& config, const std::string& out_dir,
                  const std::string& weights_path, const std::string& data_path) {
    Timer timer;
    fs::create_directories(out_dir);

    const ModelWeights weights = load_weights(weights_path);
    const std::vector<std::string> names = label_names_from_report(out_dir);
    const Dataset data = load_processed_csv(data_path, config.label_column, names);

    if (architecture_fingerprint(weights, data.n_features()) != weights.fingerprint)
        throw Error(ErrorCode::fingerprint_mismatch,
                    "weights fingerprint does not match a dataset with " +
                        std::to_string(data.n_features()) + " features");

    const MetricsReport metrics = evaluate_weights(weights, data);

    std::cout << "accuracy        " << metrics.accuracy << '\n'
              << "macro_precision " << metrics.macro_precision << '\n'
              << "macro_recall    " << metrics.macro_recall << '\n'
              << "macro_f1        " << metrics.macro_f1 << '\n';

    ordered_json doc;
    doc["meta"] = make_meta("evaluate", timer.seconds());
    doc["results"] = metrics_to_json(metrics, data.label_names);
    write_json_file(out_dir + "/evaluate_metrics.json", doc);
}

namespace {

const char* error_category(const Error& e) {
    return is_config_error(e.code()) ? "config" : "runtime";
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"federated transfer learning simulator for IIoT intrusion detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string weights_path;
    std::string data_path;
    std::uint64_t seed_override = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config JSON")->required();
        sub->add_option("--out", out_override, "output directory (overrides config)");
        sub->add_option("--seed", seed_override, "seed override")
            ->each([&](const std::string&) { have_seed = true; });
    };

    CLI::App* prep = app.add_subcommand("preprocess", "clean, encode, select, scale, split");
    add_common(prep);
    CLI::App* fed = app.add_subcommand("train-federated", "run the federated simulation");
    add_common(fed);
    CLI::App* base = app.add_subcommand("train-baselines", "fit and score baseline models");
    add_common(base);
    CLI::App* eval = app.add_subcommand("evaluate", "score a weights file on a dataset");
    add_common(eval);
    eval->add_option("--weights", weights_path, "weights file (.ftlw)");
    eval->add_option("--data", data_path, "processed dataset CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: config: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        ExperimentConfig config = load_config(config_path);
        if (have_seed) config.seed = seed_override;
        const std::string out_dir = !out_override.empty() ? out_override : config.output_dir;

        if (prep->parsed()) {
            cmd_preprocess(config, out_dir);
        } else if (fed->parsed()) {
            cmd_train_federated(config, out_dir);
        } else if (base->parsed()) {
            cmd_train_baselines(config, out_dir);
        } else if (eval->parsed()) {
            const std::string w =
                !weights_path.empty() ? weights_path : out_dir + "/final_weights.ftlw";
            const std::string d =
                !data_path.empty() ? data_path : out_dir + "/processed_test.csv";
            cmd_evaluate(config, out_dir, w, d);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << error_category(e) << ": " << one_line(e.what()) << '\n';
        return is_config_error(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << one_line(e.what()) << '\n';
        return 1;
    }
}

} // namespace ftl
