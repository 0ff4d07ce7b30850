#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinny/gradients.hpp"
#include "skinny/rng.hpp"

namespace skinny {

enum class TaskKind { regression, classification };

/// Design matrix plus targets, normalization statistics, and split indices.
/// Immutable once built; shareable across threads.
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::MatrixXd y_values;  // regression targets (N x c)
    Eigen::VectorXi labels;    // classification labels (N)
    TaskKind task = TaskKind::regression;
    int num_classes = 0;

    Eigen::VectorXd feature_means;  // empty until znormalize
    Eigen::VectorXd feature_stds;
    std::vector<std::uint8_t> onehot;  // per-column: skip during normalization
    std::vector<std::string> feature_names;

    std::vector<int> train_idx, val_idx, test_idx;

    Eigen::Index rows() const { return X.rows(); }
    int features() const { return static_cast<int>(X.cols()); }

    Eigen::MatrixXd x_rows(const std::vector<int>& idx) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) out.row(r) = X.row(idx[r]);
        return out;
    }

    Targets targets_rows(const std::vector<int>& idx) const {
        Targets t;
        if (task == TaskKind::regression) {
            t.values.resize(static_cast<Eigen::Index>(idx.size()), y_values.cols());
            for (std::size_t r = 0; r < idx.size(); ++r) t.values.row(r) = y_values.row(idx[r]);
        } else {
            t.labels.resize(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t r = 0; r < idx.size(); ++r) t.labels[r] = labels[idx[r]];
        }
        return t;
    }
};

/// Correlated-design sparse linear model: rows of X are N(0, Sigma) with
/// Sigma_ij = sigma^|i-j|, the response is y = X beta* + noise with beta*
/// having true_support_size equi-spaced unit entries.
struct SyntheticSpec {
    int n_samples = 0;          // N; split 80% train / 20% validation
    int n_features = 0;         // p
    double correlation = 0.0;   // sigma in [0, 1)
    int true_support_size = 8;  // k*
    double noise_std = 0.5;
    int n_test = 10000;         // extra test rows from the same law
    std::uint64_t seed = 0;

    void validate() const {
        if (n_samples < 5) throw std::invalid_argument("synthetic: n_samples too small");
        if (n_features < 1) throw std::invalid_argument("synthetic: n_features must be positive");
        if (!(correlation >= 0.0 && correlation < 1.0))
            throw std::invalid_argument("synthetic: correlation must lie in [0, 1)");
        if (true_support_size < 1 || true_support_size > n_features)
            throw std::invalid_argument("synthetic: true_support_size must lie in [1, p]");
        if (noise_std < 0.0) throw std::invalid_argument("synthetic: noise_std must be >= 0");
        if (n_test < 0) throw std::invalid_argument("synthetic: n_test must be >= 0");
    }
};

struct TrueSupport {
    std::vector<int> indices;  // sorted, 0-based
};

/// Support index rule: i_r = (r-1) * floor(p / k*) for r = 1..k* (0-based).
inline TrueSupport equispaced_support(int p, int k) {
    TrueSupport s;
    const int spacing = p / k;
    for (int r = 0; r < k; ++r) s.indices.push_back(r * spacing);
    return s;
}

/// Draws the dataset. Rows come from the AR(1) recurrence
///   x_1 = z_1,  x_j = sigma x_{j-1} + sqrt(1 - sigma^2) z_j
/// which realizes the sigma^|i-j| covariance exactly in O(p) per row.
/// Rows [0, 0.8N) are train, [0.8N, N) validation, and the n_test extra rows
/// are the test split.
inline std::pair<Dataset, TrueSupport> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int total = spec.n_samples + spec.n_test;
    const int p = spec.n_features;
    Rng rng(seed_mix(spec.seed, 0xda7aULL));

    Dataset ds;
    ds.task = TaskKind::regression;
    ds.X.resize(total, p);
    const double rho = spec.correlation;
    const double innov = std::sqrt(1.0 - rho * rho);
    for (int r = 0; r < total; ++r) {
        double prev = rng.normal();
        ds.X(r, 0) = prev;
        for (int k = 1; k < p; ++k) {
            prev = rho * prev + innov * rng.normal();
            ds.X(r, k) = prev;
        }
    }

    TrueSupport support = equispaced_support(p, spec.true_support_size);
    ds.y_values.resize(total, 1);
    for (int r = 0; r < total; ++r) {
        double dot = 0.0;
        for (int k : support.indices) dot += ds.X(r, k);
        ds.y_values(r, 0) = dot + spec.noise_std * rng.normal();
    }

    const int n_train = (spec.n_samples * 8) / 10;
    if (n_train < 1 || n_train >= spec.n_samples)
        throw std::invalid_argument("synthetic: 80/20 split degenerate");
    for (int i = 0; i < n_train; ++i) ds.train_idx.push_back(i);
    for (int i = n_train; i < spec.n_samples; ++i) ds.val_idx.push_back(i);
    for (int i = spec.n_samples; i < total; ++i) ds.test_idx.push_back(i);
    ds.onehot.assign(p, 0);
    return {std::move(ds), std::move(support)};
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Declared handling of CSV columns. Categorical columns are one-hot
/// encoded; everything else must parse as a number. Missing values are an
/// error (no imputation).
struct CsvSchema {
    std::set<std::string> categorical;
    bool target_is_label = false;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_number(const std::string& s, int line_no, const std::string& col) {
    if (s.empty())
        throw std::runtime_error("csv: missing value in column '" + col + "' at line " +
                                 std::to_string(line_no));
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("csv: cannot parse '" + s + "' in column '" + col +
                                 "' at line " + std::to_string(line_no));
    }
    if (pos != s.size())
        throw std::runtime_error("csv: trailing characters in '" + s + "' at line " +
                                 std::to_string(line_no));
    return v;
}

}  // namespace detail

/// Loads a comma-separated file (header row, UTF-8, no quoting). The target
/// column is removed from the features; categorical columns expand into one
/// binary column per level (levels sorted lexicographically).
inline Dataset load_csv(const std::string& path, const std::string& target_column,
                        const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);

    int target_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == target_column) target_col = static_cast<int>(c);
    if (target_col < 0) throw std::runtime_error("csv: target column '" + target_column + "' not found");

    std::vector<std::vector<std::string>> raw;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error("csv: expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(fields.size()) +
                                     " at line " + std::to_string(line_no));
        raw.push_back(std::move(fields));
    }
    if (raw.empty()) throw std::runtime_error("csv: no data rows in " + path);
    const int n = static_cast<int>(raw.size());

    // column plan: numeric columns pass through, categorical expand by level
    struct Col {
        int src;
        bool categorical;
        std::vector<std::string> levels;
    };
    std::vector<Col> cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<int>(c) == target_col) continue;
        Col col;
        col.src = static_cast<int>(c);
        col.categorical = schema.categorical.count(header[c]) > 0;
        if (col.categorical) {
            std::set<std::string> levels;
            for (int r = 0; r < n; ++r) {
                if (raw[r][c].empty())
                    throw std::runtime_error("csv: missing value in column '" + header[c] +
                                             "' at line " + std::to_string(r + 2));
                levels.insert(raw[r][c]);
            }
            col.levels.assign(levels.begin(), levels.end());
        }
        cols.push_back(std::move(col));
    }

    int p = 0;
    for (const auto& col : cols) p += col.categorical ? static_cast<int>(col.levels.size()) : 1;

    Dataset ds;
    ds.X.resize(n, p);
    ds.onehot.assign(p, 0);
    int out_c = 0;
    for (const auto& col : cols) {
        if (col.categorical) {
            for (std::size_t lev = 0; lev < col.levels.size(); ++lev) {
                for (int r = 0; r < n; ++r)
                    ds.X(r, out_c) = (raw[r][col.src] == col.levels[lev]) ? 1.0 : 0.0;
                ds.onehot[out_c] = 1;
                ds.feature_names.push_back(header[col.src] + "=" + col.levels[lev]);
                ++out_c;
            }
        } else {
            for (int r = 0; r < n; ++r)
                ds.X(r, out_c) = detail::parse_number(raw[r][col.src], r + 2, header[col.src]);
            ds.feature_names.push_back(header[col.src]);
            ++out_c;
        }
    }

    if (schema.target_is_label) {
        ds.task = TaskKind::classification;
        std::map<std::string, int> level_ids;
        for (int r = 0; r < n; ++r) {
            if (raw[r][target_col].empty())
                throw std::runtime_error("csv: missing target at line " + std::to_string(r + 2));
            level_ids.emplace(raw[r][target_col], 0);
        }
        int next = 0;
        for (auto& kv : level_ids) kv.second = next++;
        ds.num_classes = next;
        ds.labels.resize(n);
        for (int r = 0; r < n; ++r) ds.labels[r] = level_ids.at(raw[r][target_col]);
    } else {
        ds.task = TaskKind::regression;
        ds.y_values.resize(n, 1);
        for (int r = 0; r < n; ++r)
            ds.y_values(r, 0) = detail::parse_number(raw[r][target_col], r + 2, target_column);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Normalization and splitting
// ---------------------------------------------------------------------------

/// Z-normalizes continuous columns in place using TRAIN split statistics
/// (population std; constant columns get std 1). One-hot columns pass
/// through untouched. Statistics are stored for inference-time reuse.
inline void znormalize(Dataset& ds) {
    if (ds.train_idx.empty()) throw std::invalid_argument("znormalize: empty train split");
    const int p = ds.features();
    if (ds.onehot.empty()) ds.onehot.assign(p, 0);
    ds.feature_means = Eigen::VectorXd::Zero(p);
    ds.feature_stds = Eigen::VectorXd::Ones(p);
    const double n = static_cast<double>(ds.train_idx.size());
    for (int k = 0; k < p; ++k) {
        if (ds.onehot[k]) continue;
        double mean = 0.0;
        for (int r : ds.train_idx) mean += ds.X(r, k);
        mean /= n;
        double var = 0.0;
        for (int r : ds.train_idx) {
            const double d = ds.X(r, k) - mean;
            var += d * d;
        }
        double std = std::sqrt(var / n);
        if (std == 0.0) std = 1.0;
        ds.feature_means[k] = mean;
        ds.feature_stds[k] = std;
        ds.X.col(k) = (ds.X.col(k).array() - mean) / std;
    }
}

inline void denormalize(Dataset& ds) {
    if (ds.feature_means.size() == 0) return;
    for (int k = 0; k < ds.features(); ++k)
        ds.X.col(k) = ds.X.col(k).array() * ds.feature_stds[k] + ds.feature_means[k];
    ds.feature_means.resize(0);
    ds.feature_stds.resize(0);
}

/// Writes the dataset in the same CSV dialect load_csv reads (header row,
/// comma separated). The target column is last, named "target".
inline void write_csv(const Dataset& ds, std::ostream& out) {
    const int p = ds.features();
    for (int k = 0; k < p; ++k) {
        if (!ds.feature_names.empty())
            out << ds.feature_names[k];
        else
            out << "x" << k;
        out << ",";
    }
    out << "target\n";
    out.precision(17);
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        for (int k = 0; k < p; ++k) out << ds.X(r, k) << ",";
        if (ds.task == TaskKind::regression)
            out << ds.y_values(r, 0);
        else
            out << ds.labels[r];
        out << "\n";
    }
}

/// Seeded shuffle followed by a contiguous partition into
/// train/validation/test. Fractions must sum to 1.
inline void split(Dataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    const int n = static_cast<int>(ds.rows());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed_mix(seed, 0x5914ULL));
    rng.shuffle(order);
    const int n_train = static_cast<int>(std::floor(train_frac * n));
    const int n_val = static_cast<int>(std::floor(val_frac * n));
    const int n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::invalid_argument("split: a split would be empty");
    ds.train_idx.assign(order.begin(), order.begin() + n_train);
    ds.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    ds.test_idx.assign(order.begin() + n_train + n_val, order.end());
}

}  // namespace skinny
