#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace specsel;
using Catch::Matchers::ContainsSubstring;
namespace ts = testsupport;

TEST_CASE("load_csv parses a small labeled file") {
    ts::TempDir tmp("csv");
    auto path = tmp.path() / "small.csv";
    ts::write_file(path, "400,402,404,class\n1.0,2.0,3.0,a\n1.1,2.1,3.1,a\n5.0,6.0,7.0,b\n5.1,6.1,7.1,b\n");

    Dataset d = load_csv(path.string(), std::string("class"));
    CHECK(d.n() == 4);
    CHECK(d.p() == 3);
    CHECK(d.num_classes() == 2);
    CHECK(d.class_names == std::vector<std::string>{"a", "b"});
    CHECK(d.labels == std::vector<int>{0, 0, 1, 1});
    CHECK(d.var_ids == std::vector<double>{400.0, 402.0, 404.0});
    CHECK(d.values(2, 1) == 6.0);
}

TEST_CASE("load_csv reports the offending cell") {
    ts::TempDir tmp("csv-bad");
    auto path = tmp.path() / "bad.csv";
    ts::write_file(path, "1,2,class\n0.5,oops,a\n0.6,0.7,b\n");
    CHECK_THROWS_MATCHES(load_csv(path.string(), std::string("class")), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("row 2") && ContainsSubstring("column 2")));
}

TEST_CASE("load_csv rejects missing labels and absent label columns") {
    ts::TempDir tmp("csv-lbl");
    auto missing = tmp.path() / "missing.csv";
    ts::write_file(missing, "1,2,class\n0.5,0.4,a\n0.6,0.7,\n");
    CHECK_THROWS_AS(load_csv(missing.string(), std::string("class")), DataError);

    auto nolabel = tmp.path() / "nolabel.csv";
    ts::write_file(nolabel, "1,2\n0.5,0.4\n");
    CHECK_THROWS_AS(load_csv(nolabel.string(), std::string("class")), DataError);

    // Without a label column request the same file loads as unlabeled data.
    Dataset d = load_csv(nolabel.string());
    CHECK(d.n() == 1);
    CHECK_FALSE(d.has_labels());
}

TEST_CASE("load_csv enforces strictly increasing variable ids") {
    ts::TempDir tmp("csv-ids");
    auto path = tmp.path() / "ids.csv";
    ts::write_file(path, "2,1,class\n0.5,0.4,a\n0.1,0.2,b\n");
    CHECK_THROWS_MATCHES(load_csv(path.string(), std::string("class")), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("strictly increasing")));
}

TEST_CASE("stratified_split partitions per class with ceil labeled counts") {
    Eigen::MatrixXd means(2, 3);
    means << 0, 0, 0, 5, 5, 5;
    Dataset d = ts::make_blobs({4, 6}, means, 1.0, 11);

    LabeledSplit s = stratified_split(d, 0.5, 7);
    CHECK(s.N() == 5);  // ceil(2) + ceil(3)
    CHECK(s.M() == 5);
    CHECK(s.labeled.has_labels());
    CHECK_FALSE(s.unlabeled.has_labels());

    // Partition: every parent row appears exactly once.
    std::vector<int> all(s.labeled_rows);
    all.insert(all.end(), s.unlabeled_rows.begin(), s.unlabeled_rows.end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(static_cast<std::size_t>(d.n()));
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);

    // Both classes present on the labeled side.
    std::vector<int> counts(2, 0);
    for (int l : s.labeled.labels) ++counts[static_cast<std::size_t>(l)];
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 3);

    // Shadow truth matches the parent labels.
    for (std::size_t j = 0; j < s.unlabeled_rows.size(); ++j)
        CHECK(s.scoring_truth()[j] == d.labels[static_cast<std::size_t>(s.unlabeled_rows[j])]);
}

TEST_CASE("stratified_split is deterministic given the seed") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 3, 3;
    Dataset d = ts::make_blobs({10, 10}, means, 1.0, 5);
    LabeledSplit a = stratified_split(d, 0.5, 42);
    LabeledSplit b = stratified_split(d, 0.5, 42);
    CHECK(a.labeled_rows == b.labeled_rows);
    CHECK(a.unlabeled_rows == b.unlabeled_rows);
    LabeledSplit c = stratified_split(d, 0.5, 43);
    CHECK(a.labeled_rows != c.labeled_rows);
}

TEST_CASE("stratified_split names a class that is too small") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 3, 3;
    Dataset d = ts::make_blobs({12, 2}, means, 1.0, 5);
    CHECK_THROWS_MATCHES(stratified_split(d, 0.4, 1), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("c1")));
}

TEST_CASE("aggregate level 1 is the identity") {
    Eigen::MatrixXd means(2, 4);
    means << 0, 0, 0, 0, 2, 2, 2, 2;
    Dataset d = ts::make_blobs({3, 3}, means, 1.0, 2);
    Dataset a = aggregate(d, 1);
    CHECK(a.values == d.values);
    CHECK(a.var_ids == d.var_ids);
    CHECK(a.labels == d.labels);
}

TEST_CASE("aggregate averages adjacent blocks") {
    Dataset d;
    d.values.resize(1, 4);
    d.values << 1, 3, 5, 7;
    d.var_ids = {400, 402, 404, 406};
    Dataset a = aggregate(d, 2);
    REQUIRE(a.p() == 2);
    CHECK(a.values(0, 0) == 2.0);
    CHECK(a.values(0, 1) == 6.0);
    CHECK(a.var_ids == std::vector<double>{401.0, 405.0});
}

TEST_CASE("aggregate handles a trailing partial block") {
    Dataset d;
    d.values.resize(1, 5);
    d.values << 1, 3, 5, 7, 9;
    d.var_ids = {1, 2, 3, 4, 5};
    Dataset a = aggregate(d, 2);
    REQUIRE(a.p() == 3);
    CHECK(a.values(0, 2) == 9.0);  // averaged over its actual width of one
    CHECK(a.var_ids[2] == 5.0);
}

TEST_CASE("aggregate reduces 1050 columns at level 30 to 35") {
    Dataset d;
    d.values = Eigen::MatrixXd::Random(2, 1050);
    for (int j = 0; j < 1050; ++j) d.var_ids.push_back(400.0 + 2.0 * j);
    Dataset a = aggregate(d, 30);
    CHECK(a.p() == 35);
    CHECK_THROWS_AS(aggregate(d, 1051), ConfigError);
    CHECK_THROWS_AS(aggregate(d, 0), ConfigError);
}

TEST_CASE("aggregate composes and preserves rows and labels") {
    Eigen::MatrixXd means(2, 12);
    means.setZero();
    means.row(1).setConstant(2.0);
    Dataset d = ts::make_blobs({4, 4}, means, 1.0, 3);
    Dataset ab = aggregate(aggregate(d, 2), 3);
    Dataset once = aggregate(d, 6);
    CHECK(ab.p() == once.p());
    CHECK(ab.n() == d.n());
    CHECK(ab.labels == d.labels);
}

TEST_CASE("split manifests replay to the identical split") {
    Eigen::MatrixXd means(2, 2);
    means << 0, 0, 4, 4;
    Dataset d = ts::make_blobs({8, 8}, means, 1.0, 9);
    LabeledSplit s = stratified_split(d, 0.5, 123);
    json manifest = split_manifest(s);
    LabeledSplit r = split_from_manifest(d, manifest);
    CHECK(r.labeled_rows == s.labeled_rows);
    CHECK(r.unlabeled_rows == s.unlabeled_rows);
    CHECK(r.labeled.values == s.labeled.values);
    CHECK(r.scoring_truth() == s.scoring_truth());

    json broken = manifest;
    broken["labeled_rows"][0] = broken["unlabeled_rows"][0];
    CHECK_THROWS_AS(split_from_manifest(d, broken), DataError);
}
