#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <set>

#include "ftl/dataset_io.hpp"
#include "ftl/synth.hpp"

using namespace ftl;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/ftl_test_") + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

// distinct row ids survive select_rows, so partition invariants can be
// checked on feature content
Dataset tagged_dataset(std::size_t n, std::size_t n_classes, std::uint64_t seed) {
    Dataset d;
    d.features = Matrix(n, 1);
    d.labels.resize(n);
    d.feature_meta = {{"row_id", FeatureKind::numeric}};
    for (std::size_t c = 0; c < n_classes; ++c)
        d.label_names.push_back("c" + std::to_string(c));
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        d.features(i, 0) = double(i);
        d.labels[i] = int(rng.below(n_classes));
    }
    return d;
}

std::multiset<double> row_ids(const Dataset& d) {
    std::multiset<double> ids;
    for (std::size_t i = 0; i < d.n_samples(); ++i) ids.insert(d.features(i, 0));
    return ids;
}

} // namespace

TEST_CASE("load_csv reads a small table verbatim") {
    const auto path = write_temp_csv("basic.csv", "a,b,label\n1,2,x\n3,4,y\n5,6,x\n");
    const RawTable t = load_csv(path, "label");
    CHECK(t.col_count == 3);
    CHECK(t.row_count == 3);
    CHECK(t.cell(0, 0) == "1");
    CHECK(t.cell(2, 2) == "x");
    std::remove(path.c_str());
}

TEST_CASE("load_csv handles quoted fields and crlf") {
    const auto path = write_temp_csv(
        "quoted.csv", "name,note,label\r\nalpha,\"a,b\",x\r\nbeta,\"say \"\"hi\"\"\",y\r\n");
    const RawTable t = load_csv(path, "label");
    CHECK(t.cell(0, 1) == "a,b");
    CHECK(t.cell(1, 1) == "say \"hi\"");
    std::remove(path.c_str());
}

TEST_CASE("load_csv errors are distinct and descriptive") {
    CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv", "label"), Error);
    try {
        load_csv("/nonexistent/nope.csv", "label");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::file_not_found);
    }

    const auto ragged = write_temp_csv("ragged.csv", "a,b,label\n1,2\n3,4,x\n");
    try {
        load_csv(ragged, "label");
        FAIL("expected ragged row error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ragged_row);
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
    std::remove(ragged.c_str());

    const auto ok = write_temp_csv("nolabel.csv", "a,b,c\n1,2,3\n");
    try {
        load_csv(ok, "label");
        FAIL("expected missing column error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_column);
        CHECK(std::string(e.what()).find("label") != std::string::npos);
    }
    std::remove(ok.c_str());
}

TEST_CASE("the bundled fixture loads with the expected shape") {
    const RawTable t = load_csv(std::string(FTL_SOURCE_DIR) + "/fixtures/iiot_sample.csv",
                                "attack_type");
    // fixtures/iiot_sample.csv has 2001 lines: header + 2000 data rows
    CHECK(t.row_count == 2000);
    CHECK(t.col_count == 16);

    const LabelEncoding enc = encode_labels(t, "attack_type");
    CHECK(enc.label_names.size() == 6); // distinct label strings in the file

    std::set<std::string> protos;
    const std::size_t proto_col = t.column_index("proto");
    for (std::size_t r = 0; r < t.row_count; ++r) protos.insert(t.cell(r, proto_col));
    CHECK(protos.size() == 4); // distinct protocol strings in the file
}

TEST_CASE("encode_labels sorts names lexicographically") {
    const auto path = write_temp_csv("labels.csv", "f,label\n1,dos\n2,normal\n3,dos\n");
    const RawTable t = load_csv(path, "label");
    const LabelEncoding enc = encode_labels(t, "label");
    CHECK(enc.label_names == std::vector<std::string>{"dos", "normal"});
    CHECK(enc.labels == std::vector<int>{0, 1, 0});
    std::remove(path.c_str());
}

TEST_CASE("encode_labels handles a single class") {
    const auto path = write_temp_csv("single.csv", "f,label\n1,x\n2,x\n");
    const RawTable t = load_csv(path, "label");
    const LabelEncoding enc = encode_labels(t, "label");
    CHECK(enc.label_names == std::vector<std::string>{"x"});
    CHECK(enc.labels == std::vector<int>{0, 0});
    std::remove(path.c_str());
}

TEST_CASE("encode_labels rejects empty label cells naming the row") {
    const auto path = write_temp_csv("empty_label.csv", "f,label\n1,x\n2,\n");
    const RawTable t = load_csv(path, "label");
    try {
        encode_labels(t, "label");
        FAIL("expected empty label error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_label);
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("split sizes follow the test fraction") {
    const Dataset d = tagged_dataset(100, 2, 5);
    const TrainTestSplit s = split_train_test(d, {0.2, 0.5, 2, 7});
    CHECK(s.train.n_samples() == 80);
    CHECK(s.test.n_samples() == 20);
    CHECK(s.train.n_samples() > s.test.n_samples());
}

TEST_CASE("split is deterministic under the seed") {
    const Dataset d = tagged_dataset(101, 3, 8);
    const TrainTestSplit a = split_train_test(d, {0.25, 0.5, 2, 99});
    const TrainTestSplit b = split_train_test(d, {0.25, 0.5, 2, 99});
    CHECK(row_ids(a.train) == row_ids(b.train));
    CHECK(row_ids(a.test) == row_ids(b.test));

    const TrainTestSplit c = split_train_test(d, {0.25, 0.5, 2, 100});
    CHECK(row_ids(c.train) != row_ids(a.train));
}

TEST_CASE("split is stratified per class") {
    // counts (50, 30, 20) at test fraction 0.2 -> test counts (10, 6, 4)
    Dataset d;
    d.features = Matrix(100, 1);
    d.labels.resize(100);
    d.feature_meta = {{"row_id", FeatureKind::numeric}};
    d.label_names = {"a", "b", "c"};
    for (std::size_t i = 0; i < 100; ++i) {
        d.features(i, 0) = double(i);
        d.labels[i] = i < 50 ? 0 : (i < 80 ? 1 : 2);
    }
    const TrainTestSplit s = split_train_test(d, {0.2, 0.5, 2, 3});
    std::vector<int> test_counts(3, 0);
    for (int l : s.test.labels) test_counts[std::size_t(l)]++;
    CHECK(test_counts == std::vector<int>{10, 6, 4});
}

TEST_CASE("train and test are disjoint and reconstruct the parent") {
    const Dataset d = tagged_dataset(83, 4, 13);
    const TrainTestSplit s = split_train_test(d, {0.3, 0.5, 2, 21});

    std::multiset<double> all = row_ids(s.train);
    for (double id : row_ids(s.test)) all.insert(id);
    CHECK(all == row_ids(d));
    CHECK(all.size() == 83); // multiset equality + size implies disjointness
}

TEST_CASE("single-sample classes stay in train with a warning") {
    Dataset d = tagged_dataset(21, 2, 17);
    d.label_names.push_back("rare");
    d.labels[20] = 2;
    const TrainTestSplit s = split_train_test(d, {0.3, 0.5, 2, 2});
    bool rare_in_train = false;
    for (int l : s.train.labels) rare_in_train |= (l == 2);
    CHECK(rare_in_train);
    for (int l : s.test.labels) CHECK(l != 2);
    CHECK(!s.warnings.empty());
}

TEST_CASE("u stays greater than v even on tiny inputs") {
    const Dataset d = tagged_dataset(2, 1, 1);
    const TrainTestSplit s = split_train_test(d, {0.49, 0.5, 1, 1});
    CHECK(s.train.n_samples() > s.test.n_samples());
}

TEST_CASE("client/server partition sizes and stratification") {
    const Dataset d = tagged_dataset(100, 2, 23);
    const ClientServerSplit s = partition_client_server(d, {0.2, 0.5, 2, 5});
    CHECK(s.server_data.n_samples() == 50);
    CHECK(s.client_pool.n_samples() == 50);

    std::multiset<double> all = row_ids(s.server_data);
    for (double id : row_ids(s.client_pool)) all.insert(id);
    CHECK(all == row_ids(d));
}

TEST_CASE("extreme server fraction leaves an empty partition") {
    const Dataset d = tagged_dataset(10, 1, 29);
    try {
        partition_client_server(d, {0.2, 0.99, 2, 5});
        FAIL("expected empty partition error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_partition);
    }
}

TEST_CASE("client shares are equal sized and reconstruct the pool") {
    const Dataset pool = tagged_dataset(101, 3, 31);
    const std::vector<Dataset> shares = partition_among_clients(pool, 2, 9);
    REQUIRE(shares.size() == 2);
    CHECK(shares[0].n_samples() == 51);
    CHECK(shares[1].n_samples() == 50);

    std::multiset<double> all;
    for (const auto& s : shares)
        for (double id : row_ids(s)) all.insert(id);
    CHECK(all == row_ids(pool));
}

TEST_CASE("one client gets the whole pool") {
    const Dataset pool = tagged_dataset(37, 2, 41);
    const std::vector<Dataset> shares = partition_among_clients(pool, 1, 3);
    REQUIRE(shares.size() == 1);
    CHECK(row_ids(shares[0]) == row_ids(pool));
}

TEST_CASE("more clients than rows is an error") {
    const Dataset pool = tagged_dataset(3, 1, 43);
    try {
        partition_among_clients(pool, 5, 1);
        FAIL("expected too-many-clients error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::too_many_clients);
    }
}

TEST_CASE("dirichlet shares still reconstruct the pool") {
    const Dataset pool = tagged_dataset(200, 4, 47);
    const std::vector<Dataset> shares =
        partition_among_clients(pool, 3, 11, ClientSplitMode::dirichlet, 0.5);
    REQUIRE(shares.size() == 3);
    std::multiset<double> all;
    std::size_t total = 0;
    for (const auto& s : shares) {
        total += s.n_samples();
        for (double id : row_ids(s)) all.insert(id);
    }
    CHECK(total == 200);
    CHECK(all == row_ids(pool));

    // non-IID on purpose: per-class shares should differ notably across clients
    const std::vector<Dataset> equal_shares = partition_among_clients(pool, 3, 11);
    CHECK(shares[0].n_samples() != equal_shares[0].n_samples());
}

TEST_CASE("split spec validation rejects bad fractions") {
    const Dataset d = tagged_dataset(10, 2, 53);
    CHECK_THROWS_AS(split_train_test(d, {0.6, 0.5, 2, 1}), Error);
    CHECK_THROWS_AS(split_train_test(d, {0.0, 0.5, 2, 1}), Error);
    CHECK_THROWS_AS(partition_client_server(d, {0.2, 1.0, 2, 1}), Error);
    CHECK_THROWS_AS(partition_client_server(d, {0.2, 0.0, 2, 1}), Error);
}
