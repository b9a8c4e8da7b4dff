#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftl {

// Every failure mode gets its own code so callers (and the CLI's exit-code
// mapping) can tell validation problems apart from runtime ones.
enum class ErrorCode {
    file_not_found,
    ragged_row,
    missing_column,
    empty_label,
    empty_input,
    invalid_config,
    dimension_mismatch,
    length_mismatch,
    empty_partition,
    too_many_clients,
    all_columns_dropped,
    high_cardinality,
    zero_variance,
    no_features_selected,
    single_class,
    version_mismatch,
    fingerprint_mismatch,
    truncated_file,
    io_error,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Config/validation errors map to CLI exit code 2, everything else to 1.
inline bool is_config_error(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_config:
    case ErrorCode::missing_column:
    case ErrorCode::file_not_found:
        return true;
    default:
        return false;
    }
}

// Dense row-major matrix of doubles. All numeric work in the pipeline is
// 64-bit.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }
};

// ---------------------------------------------------------------------------
// Deterministic random primitives.
//
// std::shuffle and the <random> distributions are implementation-defined, so
// everything below is hand-rolled on top of a raw mt19937_64 stream. Results
// are reproducible across platforms and compilers.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Folds a list of stream identifiers into one seed, e.g.
// mix_seed({global_seed, client_id, round}).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x8b72e9fbb49b2c1full;
    for (std::uint64_t p : parts) h = splitmix64(h ^ p);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Box-Muller; draws two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Marsaglia-Tsang gamma sampler, used by the Dirichlet client split.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = uniform01();
            while (u <= 0.0) u = uniform01();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Parses a cell as a double, requiring the whole token to be consumed.
// "inf"/"nan" style tokens parse successfully (to non-finite values).
inline bool parse_double(const std::string& text, double& out) {
    std::size_t begin = text.find_first_not_of(" \t");
    if (begin == std::string::npos) return false;
    std::size_t end = text.find_last_not_of(" \t") + 1;
    const std::string token = text.substr(begin, end - begin);
    char* stop = nullptr;
    errno = 0;
    double v = std::strtod(token.c_str(), &stop);
    if (stop != token.c_str() + token.size() || token.empty()) return false;
    out = v;
    return true;
}

// FNV-1a over raw bytes; used for config fingerprints.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace ftl
