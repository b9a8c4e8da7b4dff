#include "ftl/preprocess.hpp"
#include "ftl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace ftl {

const char* drop_reason_name(DropReason reason) {
    switch (reason) {
    case DropReason::constant: return "constant";
    case DropReason::non_finite: return "non-finite";
    case DropReason::low_correlation: return "low-correlation";
    }
    return "?";
}

CleanResult clean_columns(const RawTable& table, double nonfinite_threshold,
                          const std::string& protect) {
    if (table.row_count == 0 || table.col_count == 0)
        throw Error(ErrorCode::empty_input, "clean_columns: empty table");

    const std::size_t rows = table.row_count;
    CleanResult out;
    std::vector<std::size_t> kept_cols;

    for (std::size_t c = 0; c < table.col_count; ++c) {
        const std::string& name = table.column_names[c];
        if (name == protect) {
            kept_cols.push_back(c);
            continue;
        }

        bool all_same_string = true;
        bool all_numeric = true;
        bool all_numeric_equal = true;
        std::size_t non_finite = 0;
        double first_value = 0.0;
        bool have_first = false;

        for (std::size_t r = 0; r < rows; ++r) {
            const std::string& cell = table.cell(r, c);
            if (cell != table.cell(0, c)) all_same_string = false;
            double v;
            if (parse_double(cell, v)) {
                if (!std::isfinite(v)) ++non_finite;
                if (!have_first) {
                    first_value = v;
                    have_first = true;
                } else if (v != first_value) {
                    all_numeric_equal = false;
                }
            } else {
                all_numeric = false;
            }
        }

        if (all_same_string || (all_numeric && all_numeric_equal)) {
            out.dropped_columns.push_back({name, DropReason::constant, "all rows identical"});
        } else if (double(non_finite) / double(rows) > nonfinite_threshold && non_finite > 0) {
            out.dropped_columns.push_back(
                {name, DropReason::non_finite,
                 std::to_string(non_finite) + " of " + std::to_string(rows) +
                     " cells non-finite"});
        } else {
            kept_cols.push_back(c);
        }
    }

    std::size_t feature_cols = kept_cols.size();
    for (std::size_t c : kept_cols)
        if (table.column_names[c] == protect) { feature_cols--; break; }
    if (feature_cols == 0)
        throw Error(ErrorCode::all_columns_dropped, "clean_columns dropped every feature column");

    // Rows that still carry a stray non-finite cell (possible when the
    // threshold is above zero) are dropped and counted.
    std::vector<std::size_t> kept_rows;
    for (std::size_t r = 0; r < rows; ++r) {
        bool ok = true;
        for (std::size_t c : kept_cols) {
            double v;
            if (parse_double(table.cell(r, c), v) && !std::isfinite(v)) {
                ok = false;
                break;
            }
        }
        if (ok) kept_rows.push_back(r);
        else out.dropped_rows++;
    }
    if (kept_rows.empty())
        throw Error(ErrorCode::empty_input, "clean_columns dropped every row");

    out.table.col_count = kept_cols.size();
    out.table.row_count = kept_rows.size();
    for (std::size_t c : kept_cols) out.table.column_names.push_back(table.column_names[c]);
    out.table.cells.reserve(kept_rows.size() * kept_cols.size());
    for (std::size_t r : kept_rows)
        for (std::size_t c : kept_cols) out.table.cells.push_back(table.cell(r, c));
    return out;
}

EncodedFeatures encode_categorical(const RawTable& table, const std::string& label_column,
                                   std::size_t max_cardinality) {
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < table.col_count; ++c)
        if (table.column_names[c] != label_column) feature_cols.push_back(c);

    EncodedFeatures out;
    out.features = Matrix(table.row_count, feature_cols.size());
    out.feature_meta.resize(feature_cols.size());

    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
        const std::size_t c = feature_cols[f];
        const std::string& name = table.column_names[c];

        bool numeric = true;
        for (std::size_t r = 0; r < table.row_count && numeric; ++r) {
            double v;
            numeric = parse_double(table.cell(r, c), v);
        }

        if (numeric) {
            for (std::size_t r = 0; r < table.row_count; ++r) {
                double v = 0.0;
                parse_double(table.cell(r, c), v);
                out.features(r, f) = v;
            }
            out.feature_meta[f] = {name, FeatureKind::numeric};
        } else {
            std::set<std::string> distinct;
            for (std::size_t r = 0; r < table.row_count; ++r)
                distinct.insert(table.cell(r, c));
            if (distinct.size() > max_cardinality)
                throw Error(ErrorCode::high_cardinality,
                            "column " + name + " has " + std::to_string(distinct.size()) +
                                " distinct values (max " + std::to_string(max_cardinality) +
                                "); consider dropping it");
            std::map<std::string, int> codes;
            std::vector<std::pair<std::string, int>> map_entries;
            int next = 0;
            for (const auto& v : distinct) {
                codes[v] = next;
                map_entries.push_back({v, next});
                ++next;
            }
            for (std::size_t r = 0; r < table.row_count; ++r)
                out.features(r, f) = double(codes[table.cell(r, c)]);
            out.feature_meta[f] = {name, FeatureKind::categorical_encoded};
            out.encoding_maps.push_back({name, std::move(map_entries)});
        }
    }
    return out;
}

CorrelationMatrix pearson_correlation_matrix(const Dataset& data) {
    const std::size_t n = data.n_samples();
    const std::size_t f = data.n_features();
    if (n == 0 || f == 0)
        throw Error(ErrorCode::empty_input, "pearson_correlation_matrix: empty dataset");

    const std::size_t dim = f + 1; // features + label

    // column-major copy with the label appended, centered
    Matrix cols(dim, n);
    for (std::size_t j = 0; j < f; ++j)
        for (std::size_t i = 0; i < n; ++i) cols(j, i) = data.features(i, j);
    for (std::size_t i = 0; i < n; ++i) cols(f, i) = double(data.labels[i]);

    std::vector<double> sd(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += cols(j, i);
        mean /= double(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cols(j, i) -= mean;
            var += cols(j, i) * cols(j, i);
        }
        var /= double(n);
        if (var <= 0.0) {
            const std::string name = j < f ? data.feature_meta[j].name : "<label>";
            throw Error(ErrorCode::zero_variance,
                        "zero-variance column reached correlation step: " + name +
                            " (pipeline ordering bug)");
        }
        sd[j] = std::sqrt(var);
    }

    CorrelationMatrix corr;
    corr.values = Matrix(dim, dim);
    for (std::size_t j = 0; j < dim; ++j) corr.values(j, j) = 1.0;
    corr.order.reserve(dim);
    for (const auto& m : data.feature_meta) corr.order.push_back(m.name);
    corr.order.push_back("<label>");

    // flattened strict upper triangle; every (a,b) entry is owned by one task
    const std::size_t n_pairs = dim * (dim - 1) / 2;
    Matrix& values = corr.values;
    const double inv_n = 1.0 / double(n);

#pragma omp parallel for schedule(static) if (parallel_enabled() && n_pairs > 8)
    for (long long p = 0; p < (long long)n_pairs; ++p) {
        // unrank p -> (a, b), a < b
        std::size_t a = 0;
        std::size_t rem = std::size_t(p);
        std::size_t row_len = dim - 1;
        while (rem >= row_len) {
            rem -= row_len;
            ++a;
            --row_len;
        }
        const std::size_t b = a + 1 + rem;
        double dot = 0.0;
        const double* ca = cols.row(a);
        const double* cb = cols.row(b);
        for (std::size_t i = 0; i < n; ++i) dot += ca[i] * cb[i];
        const double rho = dot * inv_n / (sd[a] * sd[b]);
        values(a, b) = rho;
        values(b, a) = rho;
    }
    return corr;
}

SelectionResult select_features(const CorrelationMatrix& corr, const SelectionPolicy& policy) {
    const std::size_t f = corr.n_features();
    SelectionResult out;

    // stage 1: label relevance
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < f; ++i) {
        const double r = std::fabs(corr.label_correlation(i));
        if (r < policy.label_threshold) {
            out.dropped.push_back({corr.order[i], DropReason::low_correlation,
                                   "|label correlation| " + std::to_string(r) +
                                       " below threshold " +
                                       std::to_string(policy.label_threshold)});
        } else {
            survivors.push_back(i);
        }
    }

    // stage 2: pairwise redundancy; higher label correlation wins, ties go to
    // the lexicographically first name
    std::vector<std::size_t> priority = survivors;
    std::sort(priority.begin(), priority.end(), [&](std::size_t a, std::size_t b) {
        const double ra = std::fabs(corr.label_correlation(a));
        const double rb = std::fabs(corr.label_correlation(b));
        if (ra != rb) return ra > rb;
        return corr.order[a] < corr.order[b];
    });

    std::vector<std::size_t> kept;
    for (std::size_t cand : priority) {
        bool redundant = false;
        for (std::size_t k : kept) {
            if (std::fabs(corr.values(cand, k)) > policy.redundancy_threshold) {
                out.dropped.push_back({corr.order[cand], DropReason::low_correlation,
                                       "redundant with " + corr.order[k] +
                                           " (|r| " +
                                           std::to_string(std::fabs(corr.values(cand, k))) +
                                           ")"});
                redundant = true;
                break;
            }
        }
        if (!redundant) kept.push_back(cand);
    }

    if (kept.empty())
        throw Error(ErrorCode::no_features_selected,
                    "no features survived selection; lower label_threshold");

    std::sort(kept.begin(), kept.end()); // back to original column order
    for (std::size_t i : kept) out.selected.push_back(corr.order[i]);
    return out;
}

ScalerParams fit_minmax_scaler(const Dataset& train) {
    if (train.n_samples() == 0)
        throw Error(ErrorCode::empty_input, "fit_minmax_scaler: empty dataset");
    const std::size_t f = train.n_features();
    ScalerParams p;
    p.min.assign(f, 0.0);
    p.max.assign(f, 0.0);
    for (std::size_t j = 0; j < f; ++j) {
        double lo = train.features(0, j);
        double hi = lo;
        for (std::size_t i = 1; i < train.n_samples(); ++i) {
            lo = std::min(lo, train.features(i, j));
            hi = std::max(hi, train.features(i, j));
        }
        p.min[j] = lo;
        p.max[j] = hi;
    }
    return p;
}

Dataset apply_scaler(const Dataset& data, const ScalerParams& params) {
    if (params.min.size() != data.n_features())
        throw Error(ErrorCode::dimension_mismatch,
                    "apply_scaler: " + std::to_string(params.min.size()) + " params vs " +
                        std::to_string(data.n_features()) + " features");
    Dataset out = data;
    for (std::size_t j = 0; j < data.n_features(); ++j) {
        const double lo = params.min[j];
        const double range = params.max[j] - lo;
        for (std::size_t i = 0; i < data.n_samples(); ++i)
            out.features(i, j) = range > 0.0 ? (data.features(i, j) - lo) / range : 0.0;
    }
    return out;
}

PipelineResult preprocess_table(const RawTable& table, const std::string& label_column,
                                const PreprocessConfig& config) {
    table.column_index(label_column); // validate early

    PipelineResult out;
    out.report.label_column = label_column;
    out.report.original_columns = table.column_names;

    CleanResult cleaned = clean_columns(table, config.nonfinite_threshold, label_column);
    out.report.dropped_columns = cleaned.dropped_columns;
    out.report.dropped_rows = cleaned.dropped_rows;

    EncodedFeatures encoded =
        encode_categorical(cleaned.table, label_column, config.max_cardinality);
    out.report.encoding_maps = encoded.encoding_maps;

    LabelEncoding labels = encode_labels(cleaned.table, label_column);

    Dataset full;
    full.features = std::move(encoded.features);
    full.feature_meta = std::move(encoded.feature_meta);
    full.labels = std::move(labels.labels);
    full.label_names = std::move(labels.label_names);
    out.report.label_names = full.label_names;

    CorrelationMatrix corr = pearson_correlation_matrix(full);
    SelectionResult selection = select_features(
        corr, {config.label_threshold, config.redundancy_threshold});
    for (auto& d : selection.dropped) out.report.dropped_columns.push_back(d);
    out.report.selected_features = selection.selected;

    // project onto the selected columns, keeping original order
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < full.n_features(); ++j)
        if (std::find(selection.selected.begin(), selection.selected.end(),
                      full.feature_meta[j].name) != selection.selected.end())
            keep.push_back(j);

    out.dataset.features = Matrix(full.n_samples(), keep.size());
    for (std::size_t i = 0; i < full.n_samples(); ++i)
        for (std::size_t j = 0; j < keep.size(); ++j)
            out.dataset.features(i, j) = full.features(i, keep[j]);
    for (std::size_t j : keep) out.dataset.feature_meta.push_back(full.feature_meta[j]);
    out.dataset.labels = full.labels;
    out.dataset.label_names = full.label_names;
    return out;
}

nlohmann::ordered_json report_to_json(const PreprocessReport& report) {
    nlohmann::ordered_json j;
    j["label_column"] = report.label_column;
    j["original_columns"] = report.original_columns;

    nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
    for (const auto& d : report.dropped_columns) {
        nlohmann::ordered_json e;
        e["name"] = d.name;
        e["reason"] = drop_reason_name(d.reason);
        e["detail"] = d.detail;
        dropped.push_back(e);
    }
    j["dropped_columns"] = dropped;
    j["dropped_rows"] = report.dropped_rows;

    nlohmann::ordered_json maps = nlohmann::ordered_json::object();
    for (const auto& [col, entries] : report.encoding_maps) {
        nlohmann::ordered_json m = nlohmann::ordered_json::object();
        for (const auto& [value, code] : entries) m[value] = code;
        maps[col] = m;
    }
    j["encoding_maps"] = maps;
    j["selected_features"] = report.selected_features;
    j["label_names"] = report.label_names;
    j["scaler"] = {{"min", report.scaler.min}, {"max", report.scaler.max}};
    if (!report.warnings.empty()) j["warnings"] = report.warnings;
    return j;
}

} // namespace ftl
