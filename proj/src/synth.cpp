#include "ftl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <utility>
#include <vector>

namespace ftl {

Dataset make_blobs(std::size_t n_samples, std::size_t n_features, std::size_t n_classes,
                   std::uint64_t seed, double center_spread, double cluster_std) {
    Rng rng(mix_seed({seed, 0xB10B5}));

    Matrix centers(n_classes, n_features);
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t j = 0; j < n_features; ++j)
            centers(c, j) = rng.uniform(-center_spread, center_spread);

    Dataset out;
    out.features = Matrix(n_samples, n_features);
    out.labels.resize(n_samples);
    for (std::size_t j = 0; j < n_features; ++j)
        out.feature_meta.push_back({"x" + std::to_string(j), FeatureKind::numeric});
    for (std::size_t c = 0; c < n_classes; ++c)
        out.label_names.push_back("class" + std::to_string(c));

    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t c = i % n_classes;
        out.labels[i] = int(c);
        for (std::size_t j = 0; j < n_features; ++j)
            out.features(i, j) = centers(c, j) + rng.normal(0.0, cluster_std);
    }
    return out;
}

namespace {

struct FixtureRow {
    double duration, fwd, bwd, len_mean, len_std, syn, ack, iat, entropy, active;
    std::string proto;
    std::string label;
};

double clamp0(double v) { return v < 0.0 ? 0.0 : v; }

std::string pick_proto(Rng& rng, std::initializer_list<std::pair<const char*, double>> table) {
    double u = rng.uniform01();
    for (const auto& [name, p] : table) {
        if (u < p) return name;
        u -= p;
    }
    return std::begin(table)->first;
}

// Benign traffic: forward/backward rates move together, entropy is bimodal
// (plain vs encrypted payloads).
FixtureRow gen_normal(Rng& rng) {
    FixtureRow r;
    const double base = rng.normal(3.0, 0.55);
    r.fwd = clamp0(base + rng.normal(0.0, 0.25));
    r.bwd = clamp0(base + rng.normal(0.0, 0.25));
    r.duration = clamp0(rng.normal(5.0, 1.0));
    r.len_mean = clamp0(rng.normal(5.0, 1.0));
    r.len_std = clamp0(rng.normal(2.0, 0.5));
    r.syn = clamp0(rng.normal(1.0, 0.3));
    r.ack = clamp0(rng.normal(4.0, 0.8));
    r.iat = clamp0(rng.normal(4.0, 1.0));
    r.entropy = clamp0(rng.uniform01() < 0.5 ? rng.normal(3.0, 0.5) : rng.normal(6.0, 0.5));
    r.active = clamp0(rng.normal(5.0, 1.0));
    r.proto = pick_proto(rng, {{"tcp", 0.60}, {"udp", 0.25}, {"mqtt", 0.15}});
    r.label = "normal";
    return r;
}

// The two flood classes share every marginal; only the joint shape of
// (fwd, bwd) separates them. A Gaussian-per-feature model cannot tell them
// apart. ddos_syn: one direction saturated, the other starved.
void fill_flood_common(Rng& rng, FixtureRow& r) {
    r.duration = clamp0(rng.normal(2.2, 0.8));
    r.len_mean = clamp0(rng.normal(2.3, 0.7));
    r.len_std = clamp0(rng.normal(0.95, 0.3));
    r.syn = clamp0(rng.normal(4.7, 0.95));
    r.ack = clamp0(rng.normal(1.15, 0.5));
    r.iat = clamp0(rng.normal(1.15, 0.5));
    r.entropy = clamp0(rng.normal(1.7, 0.6));
    r.active = clamp0(rng.normal(2.15, 0.8));
    r.proto = pick_proto(rng, {{"tcp", 0.85}, {"udp", 0.15}});
}

FixtureRow gen_ddos_syn(Rng& rng) {
    FixtureRow r;
    const bool a = rng.uniform01() < 0.5;
    r.fwd = clamp0(rng.normal(a ? 5.0 : 2.0, 0.5));
    r.bwd = clamp0(rng.normal(a ? 2.0 : 5.0, 0.5));
    fill_flood_common(rng, r);
    r.label = "ddos_syn";
    return r;
}

// ddos_ack: both directions move together, at the same two levels.
FixtureRow gen_ddos_ack(Rng& rng) {
    FixtureRow r;
    const double level = rng.uniform01() < 0.5 ? 5.0 : 2.0;
    r.fwd = clamp0(rng.normal(level, 0.5));
    r.bwd = clamp0(rng.normal(level, 0.5));
    fill_flood_common(rng, r);
    r.label = "ddos_ack";
    return r;
}

FixtureRow gen_port_scan(Rng& rng) {
    FixtureRow r;
    r.fwd = clamp0(rng.normal(6.0, 0.8));
    r.bwd = clamp0(rng.normal(0.8, 0.4));
    r.duration = clamp0(rng.normal(5.5, 0.8));
    r.len_mean = clamp0(rng.normal(1.0, 0.3));
    r.len_std = clamp0(rng.normal(0.3, 0.15));
    r.syn = clamp0(rng.normal(5.0, 1.0));
    r.ack = clamp0(rng.normal(0.8, 0.4));
    r.iat = clamp0(rng.normal(0.8, 0.4));
    r.entropy = clamp0(rng.normal(0.8, 0.4));
    r.active = clamp0(rng.normal(1.0, 0.5));
    r.proto = pick_proto(rng, {{"tcp", 0.9}, {"udp", 0.1}});
    r.label = "port_scan";
    return r;
}

// Beaconing implant: mimics normal traffic except for a bimodal timing
// signature and uniformly high payload entropy.
FixtureRow gen_backdoor(Rng& rng) {
    FixtureRow r;
    const double base = rng.normal(2.0, 0.5);
    r.fwd = clamp0(base + rng.normal(0.0, 0.25));
    r.bwd = clamp0(base + rng.normal(0.0, 0.25));
    r.duration = clamp0(rng.normal(2.5, 0.8));
    r.len_mean = clamp0(rng.normal(4.5, 1.0));
    r.len_std = clamp0(rng.normal(2.0, 0.5));
    r.syn = clamp0(rng.normal(1.0, 0.3));
    r.ack = clamp0(rng.normal(4.0, 0.9));
    const bool slow = rng.uniform01() < 0.5;
    r.iat = clamp0(rng.normal(slow ? 7.0 : 2.0, slow ? 0.7 : 0.5));
    r.active = clamp0(rng.normal(slow ? 7.5 : 2.0, slow ? 0.8 : 0.6));
    r.entropy = clamp0(rng.normal(6.5, 0.6));
    r.proto = pick_proto(rng, {{"tcp", 0.7}, {"mqtt", 0.3}});
    r.label = "backdoor";
    return r;
}

FixtureRow gen_sql_injection(Rng& rng) {
    FixtureRow r;
    r.fwd = clamp0(rng.normal(1.5, 0.5));
    r.bwd = clamp0(rng.normal(2.5, 0.6));
    r.duration = clamp0(rng.normal(6.0, 1.0));
    r.len_mean = clamp0(rng.normal(6.5, 0.8));
    r.len_std = clamp0(rng.normal(3.0, 0.6));
    r.syn = clamp0(rng.normal(1.0, 0.3));
    r.ack = clamp0(rng.normal(3.0, 0.8));
    r.iat = clamp0(rng.normal(3.0, 1.0));
    r.entropy = clamp0(rng.normal(6.0, 0.8));
    r.active = clamp0(rng.normal(3.0, 1.0));
    r.proto = pick_proto(rng, {{"tcp", 0.5}, {"http", 0.5}});
    r.label = "sql_injection";
    return r;
}

} // namespace

void write_iiot_fixture(std::ostream& out, std::size_t n_rows, std::uint64_t seed) {
    Rng rng(mix_seed({seed, 0x110717}));

    // imbalanced class mix
    struct ClassSpec {
        double fraction;
        FixtureRow (*gen)(Rng&);
    };
    const ClassSpec mix[] = {
        {0.45, gen_normal},   {0.20, gen_ddos_syn}, {0.15, gen_ddos_ack},
        {0.10, gen_port_scan}, {0.06, gen_backdoor}, {0.04, gen_sql_injection},
    };

    std::vector<FixtureRow> rows;
    rows.reserve(n_rows);
    std::size_t made = 0;
    for (const auto& spec : mix) {
        std::size_t count = std::size_t(std::floor(spec.fraction * double(n_rows)));
        if (&spec == &mix[std::size(mix) - 1]) count = n_rows - made; // absorb rounding
        for (std::size_t i = 0; i < count; ++i) rows.push_back(spec.gen(rng));
        made += count;
    }
    rng.shuffle(rows);

    out << "flow_duration,fwd_pkts_per_s,bwd_pkts_per_s,pkt_len_mean,pkt_len_std,"
        << "syn_flag_ratio,ack_flag_ratio,iat_mean,payload_entropy,active_time_mean,"
        << "proto,device_type,link_quality,sensor_noise,pkt_len_median,attack_type\n";

    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };

    for (const auto& r : rows) {
        // nuisance columns: constant, occasionally-inf, pure noise, near-duplicate
        const std::string link_quality =
            rng.uniform01() < 0.015 ? "inf" : num(clamp0(rng.normal(7.0, 1.0)));
        const double noise = rng.uniform01();
        const double len_median = 0.96 * r.len_mean + rng.normal(0.0, 0.05);

        out << num(r.duration) << ',' << num(r.fwd) << ',' << num(r.bwd) << ','
            << num(r.len_mean) << ',' << num(r.len_std) << ',' << num(r.syn) << ','
            << num(r.ack) << ',' << num(r.iat) << ',' << num(r.entropy) << ','
            << num(r.active) << ',' << r.proto << ",plc_gateway," << link_quality << ','
            << num(noise) << ',' << num(len_median) << ',' << r.label << '\n';
    }
}

} // namespace ftl
