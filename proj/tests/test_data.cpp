#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "skinny/data.hpp"

using namespace skinny;

namespace {

struct TempCsv {
    std::string path;
    explicit TempCsv(const std::string& content) {
        static std::atomic<int> counter{0};
        path = (std::filesystem::temp_directory_path() /
                ("skinny_test_" + std::to_string(counter.fetch_add(1)) + ".csv"))
                   .string();
        std::ofstream out(path);
        out << content;
    }
    ~TempCsv() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("AR(1) sampler matches the target covariance") {
    SECTION("sigma = 0 gives (near) identity covariance") {
        SyntheticSpec spec;
        spec.n_samples = 50000;
        spec.n_features = 5;
        spec.correlation = 0.0;
        spec.true_support_size = 2;
        spec.n_test = 0;
        spec.seed = 5;
        auto [ds, support] = generate_synthetic(spec);
        Eigen::MatrixXd centered = ds.X.rowwise() - ds.X.colwise().mean();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(ds.rows());
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j)
                CHECK(std::abs(cov(i, j) - (i == j ? 1.0 : 0.0)) < 0.02);
    }
    SECTION("sigma = 0.5 reproduces sigma^|i-j| entrywise") {
        SyntheticSpec spec;
        spec.n_samples = 200000;
        spec.n_features = 6;
        spec.correlation = 0.5;
        spec.true_support_size = 3;
        spec.n_test = 0;
        spec.seed = 6;
        auto [ds, support] = generate_synthetic(spec);
        Eigen::MatrixXd centered = ds.X.rowwise() - ds.X.colwise().mean();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(ds.rows());
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                CHECK(std::abs(cov(i, j) - std::pow(0.5, std::abs(i - j))) < 0.02);
        // in particular Corr(x1, x3) ~ 0.25
        CHECK(std::abs(cov(0, 2) - 0.25) < 0.02);
    }
}

TEST_CASE("equi-spaced support rule") {
    const TrueSupport s = equispaced_support(256, 8);
    REQUIRE(s.indices.size() == 8);
    CHECK(s.indices == std::vector<int>{0, 32, 64, 96, 128, 160, 192, 224});
    const TrueSupport t = equispaced_support(10, 3);
    CHECK(t.indices == std::vector<int>{0, 3, 6});
}

TEST_CASE("synthetic response and splits") {
    SyntheticSpec spec;
    spec.n_samples = 100;
    spec.n_features = 12;
    spec.correlation = 0.3;
    spec.true_support_size = 4;
    spec.noise_std = 0.0;
    spec.n_test = 50;
    spec.seed = 7;
    auto [ds, support] = generate_synthetic(spec);

    SECTION("noiseless response equals X beta* exactly") {
        for (int r = 0; r < ds.rows(); ++r) {
            double dot = 0;
            for (int k : support.indices) dot += ds.X(r, k);
            CHECK(ds.y_values(r, 0) == dot);
        }
    }
    SECTION("80/20 train/validation plus appended test rows") {
        CHECK(ds.train_idx.size() == 80);
        CHECK(ds.val_idx.size() == 20);
        CHECK(ds.test_idx.size() == 50);
        CHECK(ds.rows() == 150);
    }
    SECTION("generation is deterministic per seed") {
        auto [ds2, support2] = generate_synthetic(spec);
        CHECK(ds.X == ds2.X);
        CHECK(ds.y_values == ds2.y_values);
        spec.seed = 8;
        auto [ds3, support3] = generate_synthetic(spec);
        CHECK(ds.X != ds3.X);
    }
    SECTION("invalid specs are rejected") {
        SyntheticSpec bad = spec;
        bad.true_support_size = 13;
        CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
        bad = spec;
        bad.correlation = 1.0;
        CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
    }
}

TEST_CASE("csv loading") {
    SECTION("numeric round trip") {
        TempCsv csv("a,b,target\n1.5,2,3.25\n-0.5,0,1\n4,5.125,6\n");
        Dataset ds = load_csv(csv.path, "target");
        REQUIRE(ds.rows() == 3);
        REQUIRE(ds.features() == 2);
        CHECK(ds.X(0, 0) == 1.5);
        CHECK(ds.X(2, 1) == 5.125);
        CHECK(ds.y_values(0, 0) == 3.25);
        CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
    }
    SECTION("categorical expansion to one column per level") {
        TempCsv csv("color,x,target\nred,1,0\nblue,2,1\ngreen,3,0\nred,4,1\n");
        CsvSchema schema;
        schema.categorical = {"color"};
        Dataset ds = load_csv(csv.path, "target", schema);
        REQUIRE(ds.features() == 4);  // blue, green, red + x
        CHECK(ds.feature_names[0] == "color=blue");
        CHECK(ds.feature_names[2] == "color=red");
        CHECK(ds.X(0, 2) == 1.0);  // first row is red
        CHECK(ds.X(0, 0) == 0.0);
        CHECK(ds.onehot[0] == 1);
        CHECK(ds.onehot[3] == 0);
    }
    SECTION("classification targets map sorted levels to ids") {
        TempCsv csv("x,target\n1,yes\n2,no\n3,yes\n");
        CsvSchema schema;
        schema.target_is_label = true;
        Dataset ds = load_csv(csv.path, "target", schema);
        CHECK(ds.task == TaskKind::classification);
        CHECK(ds.num_classes == 2);
        CHECK(ds.labels[0] == 1);  // "yes" sorts after "no"
        CHECK(ds.labels[1] == 0);
    }
    SECTION("header-only file is an error") {
        TempCsv csv("a,b,target\n");
        CHECK_THROWS_WITH(load_csv(csv.path, "target"), Catch::Matchers::ContainsSubstring("no data rows"));
    }
    SECTION("missing values are an error, with the line number") {
        TempCsv csv("a,target\n1,2\n,3\n");
        CHECK_THROWS_WITH(load_csv(csv.path, "target"), Catch::Matchers::ContainsSubstring("line 3"));
    }
    SECTION("unparsable numbers report the line") {
        TempCsv csv("a,target\n1,2\noops,3\n");
        CHECK_THROWS_WITH(load_csv(csv.path, "target"), Catch::Matchers::ContainsSubstring("line 3"));
    }
    SECTION("missing target column") {
        TempCsv csv("a,b\n1,2\n");
        CHECK_THROWS_WITH(load_csv(csv.path, "zzz"), Catch::Matchers::ContainsSubstring("zzz"));
    }
}

TEST_CASE("synthetic data round-trips through the csv dialect") {
    SyntheticSpec spec;
    spec.n_samples = 30;
    spec.n_features = 4;
    spec.correlation = 0.4;
    spec.true_support_size = 2;
    spec.n_test = 0;
    spec.seed = 9;
    auto [ds, support] = generate_synthetic(spec);

    TempCsv file("");
    {
        std::ofstream out(file.path);
        write_csv(ds, out);
    }
    const Dataset back = load_csv(file.path, "target");
    REQUIRE(back.rows() == ds.rows());
    REQUIRE(back.features() == 4);
    CHECK((back.X - ds.X).cwiseAbs().maxCoeff() == 0.0);  // 17 significant digits round-trip
    CHECK((back.y_values - ds.y_values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("z-normalization uses train statistics") {
    Dataset ds;
    ds.X.resize(4, 2);
    ds.X << 0.0, 5.0,
            2.0, 5.0,
            4.0, 5.0,
            6.0, 5.0;
    ds.y_values = Eigen::MatrixXd::Zero(4, 1);
    ds.train_idx = {0, 1};  // train mean 1, population std 1 for column 0
    ds.val_idx = {2, 3};

    SECTION("train column {0,2} becomes {-1,+1}; constant column untouched values") {
        znormalize(ds);
        CHECK(ds.feature_means[0] == 1.0);
        CHECK(ds.feature_stds[0] == 1.0);
        CHECK(ds.X(0, 0) == -1.0);
        CHECK(ds.X(1, 0) == 1.0);
        // constant column: std recorded as 1, becomes zero on train rows
        CHECK(ds.feature_stds[1] == 1.0);
        CHECK(ds.X(0, 1) == 0.0);
        // validation rows use TRAIN statistics, not their own
        CHECK(ds.X(2, 0) == 3.0);
        CHECK(ds.X(3, 0) == 5.0);
    }
    SECTION("one-hot columns pass through") {
        ds.onehot = {0, 1};
        znormalize(ds);
        CHECK(ds.X(0, 1) == 5.0);
    }
    SECTION("round trip is exact to 1e-12") {
        Eigen::MatrixXd orig = ds.X;
        znormalize(ds);
        denormalize(ds);
        CHECK((ds.X - orig).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("empty train split is an error") {
        Dataset empty;
        empty.X.resize(2, 1);
        empty.X << 1, 2;
        CHECK_THROWS_AS(znormalize(empty), std::invalid_argument);
    }
}

TEST_CASE("seeded splitting") {
    Dataset ds;
    ds.X = Eigen::MatrixXd::Random(100, 3);
    ds.y_values = Eigen::MatrixXd::Random(100, 1);

    split(ds, 0.64, 0.16, 0.20, 99);
    CHECK(ds.train_idx.size() == 64);
    CHECK(ds.val_idx.size() == 16);
    CHECK(ds.test_idx.size() == 20);

    SECTION("same seed gives identical indices") {
        Dataset ds2 = ds;
        split(ds2, 0.64, 0.16, 0.20, 99);
        CHECK(ds.train_idx == ds2.train_idx);
        CHECK(ds.val_idx == ds2.val_idx);
        CHECK(ds.test_idx == ds2.test_idx);
    }
    SECTION("splits are disjoint and exhaustive") {
        std::vector<int> all;
        all.insert(all.end(), ds.train_idx.begin(), ds.train_idx.end());
        all.insert(all.end(), ds.val_idx.begin(), ds.val_idx.end());
        all.insert(all.end(), ds.test_idx.begin(), ds.test_idx.end());
        std::sort(all.begin(), all.end());
        for (int i = 0; i < 100; ++i) CHECK(all[i] == i);
    }
    SECTION("bad fractions and empty splits throw") {
        CHECK_THROWS_AS(split(ds, 0.5, 0.5, 0.5, 1), std::invalid_argument);
        Dataset tiny;
        tiny.X = Eigen::MatrixXd::Random(3, 1);
        CHECK_THROWS_AS(split(tiny, 0.9, 0.05, 0.05, 1), std::invalid_argument);
    }
}
