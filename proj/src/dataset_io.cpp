#include "ftl/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ftl {

bool RawTable::has_column(const std::string& name) const {
    return std::find(column_names.begin(), column_names.end(), name) != column_names.end();
}

std::size_t RawTable::column_index(const std::string& name) const {
    auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end())
        throw Error(ErrorCode::missing_column, "column not found: " + name);
    return std::size_t(it - column_names.begin());
}

void SplitSpec::validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 0.5))
        throw Error(ErrorCode::invalid_config,
                    "test_fraction must be in (0, 0.5), got " + std::to_string(test_fraction));
    if (!(server_fraction > 0.0 && server_fraction < 1.0))
        throw Error(ErrorCode::invalid_config,
                    "server_fraction must be in (0, 1), got " + std::to_string(server_fraction));
    if (n_clients < 1)
        throw Error(ErrorCode::invalid_config, "n_clients must be >= 1");
}

namespace {

// RFC-4180 style records: quoted fields may contain commas, doubled quotes
// and newlines. Returns one vector of fields per record.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;

    auto end_field = [&] {
        fields.push_back(field);
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        // skip records that are a single empty field (trailing newline, blank line)
        if (!(fields.size() == 1 && fields[0].empty())) records.push_back(fields);
        fields.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"' && field.empty() && !field_was_quoted) {
            in_quotes = true;
            field_was_quoted = true;
        } else if (ch == ',') {
            end_field();
        } else if (ch == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_record();
        } else {
            field += ch;
        }
    }
    if (!field.empty() || !fields.empty()) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        end_record();
    }
    return records;
}

} // namespace

RawTable load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_not_found, "cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    auto records = parse_csv_records(text);
    if (records.empty()) throw Error(ErrorCode::empty_input, "empty CSV file: " + path);

    RawTable table;
    table.column_names = records[0];
    table.col_count = table.column_names.size();
    table.row_count = records.size() - 1;
    table.cells.reserve(table.row_count * table.col_count);

    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.col_count)
            throw Error(ErrorCode::ragged_row,
                        "ragged row " + std::to_string(r + 1) + ": expected " +
                            std::to_string(table.col_count) + " cells, got " +
                            std::to_string(records[r].size()));
        for (auto& cell : records[r]) table.cells.push_back(std::move(cell));
    }

    if (!table.has_column(label_column))
        throw Error(ErrorCode::missing_column,
                    "label column not found in header: " + label_column);
    return table;
}

LabelEncoding encode_labels(const RawTable& table, const std::string& label_column) {
    const std::size_t col = table.column_index(label_column);

    std::vector<std::string> names;
    for (std::size_t r = 0; r < table.row_count; ++r) {
        const std::string& v = table.cell(r, col);
        if (v.empty())
            throw Error(ErrorCode::empty_label,
                        "empty label cell at data row " + std::to_string(r + 1));
        names.push_back(v);
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());

    LabelEncoding enc;
    enc.label_names = names;
    enc.labels.resize(table.row_count);
    for (std::size_t r = 0; r < table.row_count; ++r) {
        const std::string& v = table.cell(r, col);
        enc.labels[r] = int(std::lower_bound(names.begin(), names.end(), v) - names.begin());
    }
    return enc;
}

Dataset select_rows(const Dataset& data, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.feature_meta = data.feature_meta;
    out.label_names = data.label_names;
    out.features = Matrix(indices.size(), data.n_features());
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        std::copy(data.features.row(src), data.features.row(src) + data.n_features(),
                  out.features.row(i));
        out.labels[i] = data.labels[src];
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_partition_indices(const std::vector<int>& labels, std::size_t n_classes,
                             std::size_t second_count, std::uint64_t seed,
                             std::size_t min_keep_first, std::vector<std::string>* warnings) {
    const std::size_t n = labels.size();

    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[std::size_t(labels[i])].push_back(i);

    // Per-class targets by largest remainder; per-class take is capped so the
    // first part keeps at least min_keep_first rows of every present class.
    std::vector<std::size_t> take(n_classes, 0);
    std::vector<std::size_t> cap(n_classes, 0);
    std::vector<std::pair<double, std::size_t>> remainders; // (-frac, class)
    std::size_t allocated = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const std::size_t m = by_class[c].size();
        if (m == 0) continue;
        cap[c] = m > min_keep_first ? m - min_keep_first : 0;
        if (cap[c] == 0 && min_keep_first > 0 && warnings && second_count > 0)
            warnings->push_back("class " + std::to_string(c) +
                                " has too few samples to split; kept whole in first part");
        const double exact = double(second_count) * double(m) / double(n);
        take[c] = std::min(cap[c], std::size_t(std::floor(exact)));
        allocated += take[c];
        remainders.push_back({-(exact - std::floor(exact)), c});
    }
    std::sort(remainders.begin(), remainders.end());
    // Distribute what is left, largest fractional part first; then any spill
    // goes to whichever classes still have headroom.
    for (int pass = 0; pass < 2 && allocated < second_count; ++pass) {
        for (auto& [negfrac, c] : remainders) {
            if (allocated >= second_count) break;
            const std::size_t room = cap[c] - take[c];
            if (room == 0) continue;
            const std::size_t add = pass == 0 ? std::min<std::size_t>(1, room)
                                              : std::min(second_count - allocated, room);
            take[c] += add;
            allocated += add;
        }
    }

    std::vector<std::size_t> first, second;
    first.reserve(n - allocated);
    second.reserve(allocated);
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (by_class[c].empty()) continue;
        auto rows = by_class[c];
        Rng rng(mix_seed({seed, std::uint64_t(c) + 1}));
        rng.shuffle(rows);
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < take[c] ? second : first).push_back(rows[i]);
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {first, second};
}

TrainTestSplit split_train_test(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    if (data.n_samples() < 2)
        throw Error(ErrorCode::empty_input, "split_train_test needs at least 2 samples");

    const std::size_t n = data.n_samples();
    const std::size_t v_target = std::size_t(std::llround(double(n) * spec.test_fraction));

    TrainTestSplit out;
    auto [train_idx, test_idx] = stratified_partition_indices(
        data.labels, data.n_classes(), v_target, mix_seed({spec.seed, 1}), 1, &out.warnings);

    // U > V must hold even on tiny inputs where rounding ties the two parts.
    while (train_idx.size() <= test_idx.size()) {
        train_idx.push_back(test_idx.back());
        test_idx.pop_back();
        std::sort(train_idx.begin(), train_idx.end());
        out.warnings.push_back("moved a test row back to train to keep train larger than test");
    }

    out.train = select_rows(data, train_idx);
    out.test = select_rows(data, test_idx);
    return out;
}

ClientServerSplit partition_client_server(const Dataset& train, const SplitSpec& spec) {
    spec.validate();
    if (train.n_samples() == 0)
        throw Error(ErrorCode::empty_input, "partition_client_server: empty train set");

    const std::size_t u = train.n_samples();
    const std::size_t server_count = std::size_t(std::llround(double(u) * spec.server_fraction));
    if (server_count == 0 || server_count == u)
        throw Error(ErrorCode::empty_partition,
                    "server_fraction " + std::to_string(spec.server_fraction) + " on " +
                        std::to_string(u) + " rows leaves an empty partition");

    auto [client_idx, server_idx] = stratified_partition_indices(
        train.labels, train.n_classes(), server_count, mix_seed({spec.seed, 2}), 0, nullptr);

    ClientServerSplit out;
    out.server_data = select_rows(train, server_idx);
    out.client_pool = select_rows(train, client_idx);
    return out;
}

std::vector<std::vector<std::size_t>> client_share_indices(std::size_t pool_size,
                                                           const std::vector<int>& labels,
                                                           std::size_t n_clients,
                                                           std::uint64_t seed,
                                                           ClientSplitMode mode, double alpha) {
    if (n_clients < 1)
        throw Error(ErrorCode::invalid_config, "n_clients must be >= 1");
    if (pool_size == 0)
        throw Error(ErrorCode::empty_input, "client pool is empty");
    if (n_clients > pool_size)
        throw Error(ErrorCode::too_many_clients,
                    std::to_string(n_clients) + " clients but only " +
                        std::to_string(pool_size) + " pool rows");

    std::vector<std::vector<std::size_t>> shares(n_clients);

    if (mode == ClientSplitMode::equal) {
        std::vector<std::size_t> order(pool_size);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed({seed, 3}));
        rng.shuffle(order);
        // contiguous chunks; the first pool_size % n_clients shares get one extra
        const std::size_t base = pool_size / n_clients;
        const std::size_t extra = pool_size % n_clients;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n_clients; ++i) {
            const std::size_t len = base + (i < extra ? 1 : 0);
            shares[i].assign(order.begin() + pos, order.begin() + pos + len);
            pos += len;
        }
    } else {
        // Dirichlet non-IID: per class, draw client proportions and allocate
        // that class's rows by largest remainder.
        std::size_t n_classes = 0;
        for (int l : labels) n_classes = std::max(n_classes, std::size_t(l) + 1);
        std::vector<std::vector<std::size_t>> by_class(n_classes);
        for (std::size_t i = 0; i < labels.size(); ++i)
            by_class[std::size_t(labels[i])].push_back(i);

        for (std::size_t c = 0; c < n_classes; ++c) {
            auto& rows = by_class[c];
            if (rows.empty()) continue;
            Rng rng(mix_seed({seed, 4, std::uint64_t(c)}));
            rng.shuffle(rows);
            std::vector<double> w(n_clients);
            double wsum = 0.0;
            for (auto& x : w) {
                x = rng.gamma(alpha);
                wsum += x;
            }
            std::vector<std::size_t> counts(n_clients, 0);
            std::vector<std::pair<double, std::size_t>> rem;
            std::size_t given = 0;
            for (std::size_t i = 0; i < n_clients; ++i) {
                const double exact = double(rows.size()) * w[i] / wsum;
                counts[i] = std::size_t(std::floor(exact));
                given += counts[i];
                rem.push_back({-(exact - std::floor(exact)), i});
            }
            std::sort(rem.begin(), rem.end());
            for (auto& [negfrac, i] : rem) {
                if (given >= rows.size()) break;
                counts[i]++;
                given++;
            }
            std::size_t pos = 0;
            for (std::size_t i = 0; i < n_clients; ++i) {
                shares[i].insert(shares[i].end(), rows.begin() + pos, rows.begin() + pos + counts[i]);
                pos += counts[i];
            }
        }
        // an empty share would make Eq.-style per-client weighting degenerate
        for (std::size_t i = 0; i < n_clients; ++i)
            if (shares[i].empty())
                throw Error(ErrorCode::empty_partition,
                            "dirichlet split left client " + std::to_string(i) + " empty; " +
                                "raise alpha or reduce n_clients");
    }

    for (auto& s : shares) std::sort(s.begin(), s.end());
    return shares;
}

std::vector<Dataset> partition_among_clients(const Dataset& client_pool, std::size_t n_clients,
                                             std::uint64_t seed, ClientSplitMode mode,
                                             double alpha) {
    auto shares = client_share_indices(client_pool.n_samples(), client_pool.labels, n_clients,
                                       seed, mode, alpha);
    std::vector<Dataset> out;
    out.reserve(shares.size());
    for (auto& s : shares) out.push_back(select_rows(client_pool, s));
    return out;
}

} // namespace ftl
