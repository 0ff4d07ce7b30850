#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinny/data.hpp"
#include "skinny/tree_model.hpp"

namespace skinny {

/// F1 of the estimated support against the true support. Empty estimate
/// against a nonempty truth scores 0.
inline double support_f1(const SupportMask& estimated, const TrueSupport& truth) {
    for (int k : truth.indices)
        if (k < 0 || k >= static_cast<int>(estimated.selected.size()))
            throw std::invalid_argument("support_f1: truth index out of range");
    const std::vector<int> est = estimated.indices();
    if (est.empty()) return truth.indices.empty() ? 1.0 : 0.0;
    if (truth.indices.empty()) return 0.0;
    int hits = 0;
    for (int k : est)
        if (std::binary_search(truth.indices.begin(), truth.indices.end(), k)) ++hits;
    return 2.0 * hits / static_cast<double>(est.size() + truth.indices.size());
}

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, ties counted half. Rank-based, O(N log N).
inline double auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
                  const Eigen::Ref<const Eigen::VectorXi>& labels) {
    const Eigen::Index n = scores.size();
    if (labels.size() != n) throw std::invalid_argument("auc: size mismatch");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j + 1);  // mean of ranks i+1..j
        for (Eigen::Index k = i; k < j; ++k) rank[order[k]] = avg;
        i = j;
    }

    double rank_pos = 0.0;
    Eigen::Index n_pos = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] != 0) {
            rank_pos += rank[k];
            ++n_pos;
        }
    }
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: both classes must be present");
    const double u = rank_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Macro one-vs-rest AUC for multiclass scores (N x C).
inline double auc_macro_ovr(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                            const Eigen::Ref<const Eigen::VectorXi>& labels) {
    const int classes = static_cast<int>(scores.cols());
    if (classes < 2) throw std::invalid_argument("auc_macro_ovr: need at least two classes");
    double total = 0.0;
    Eigen::VectorXi ovr(labels.size());
    for (int c = 0; c < classes; ++c) {
        for (Eigen::Index r = 0; r < labels.size(); ++r) ovr[r] = (labels[r] == c) ? 1 : 0;
        total += auc(scores.col(c), ovr);
    }
    return total / classes;
}

/// Reporting convention: mean of squared residuals, no 1/2 factor (the
/// training loss keeps its 1/2).
inline double mse(const Eigen::Ref<const Eigen::MatrixXd>& predictions,
                  const Eigen::Ref<const Eigen::MatrixXd>& truth) {
    if (predictions.rows() != truth.rows() || predictions.cols() != truth.cols())
        throw std::invalid_argument("mse: shape mismatch");
    if (predictions.rows() == 0) throw std::invalid_argument("mse: empty input");
    return (predictions - truth).squaredNorm() / static_cast<double>(predictions.rows());
}

inline double compression_ratio(const EnsembleModel& model) {
    return static_cast<double>(model.config.num_features) /
           std::max(1, selected_count(model));
}

/// Parameters actually stored by the sparse model: surviving hyperplane
/// groups plus all leaves (and biases when present).
inline long sparse_parameter_count(const EnsembleModel& model) {
    const auto& cfg = model.config;
    long count = static_cast<long>(selected_count(model)) * cfg.total_internal();
    count += static_cast<long>(cfg.num_trees) * cfg.num_outputs * cfg.leaves_per_tree();
    if (cfg.use_bias) count += cfg.total_internal();
    return count;
}

struct EvalReport {
    std::optional<double> mse;
    std::optional<double> auc;
    int selected_features = 0;
    std::optional<double> support_f1;
    double compression_ratio = 1.0;
    long sparse_parameters = 0;
};

/// Full evaluation of a model on the given rows of a dataset.
inline EvalReport evaluate(const EnsembleModel& model, const Dataset& ds,
                           const std::vector<int>& idx,
                           const TrueSupport* truth = nullptr) {
    if (ds.features() != model.config.num_features)
        throw std::invalid_argument("evaluate: feature dimension mismatch");
    if (idx.empty()) throw std::invalid_argument("evaluate: empty index set");
    const SupportMask mask = support_mask(model);
    const Eigen::MatrixXd X = ds.x_rows(idx);
    const Eigen::MatrixXd preds = predict_batch(X, model, &mask);

    EvalReport report;
    report.selected_features = mask.count();
    report.compression_ratio = compression_ratio(model);
    report.sparse_parameters = sparse_parameter_count(model);
    if (ds.task == TaskKind::regression) {
        Eigen::MatrixXd truth_vals(X.rows(), ds.y_values.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) truth_vals.row(r) = ds.y_values.row(idx[r]);
        report.mse = mse(preds, truth_vals);
    } else {
        Eigen::VectorXi labels(X.rows());
        for (std::size_t r = 0; r < idx.size(); ++r) labels[r] = ds.labels[idx[r]];
        report.auc = (preds.cols() == 1) ? auc(preds.col(0), labels) : auc_macro_ovr(preds, labels);
    }
    if (truth) report.support_f1 = support_f1(mask, *truth);
    return report;
}

/// One tuning trial's outcome, as consumed by budgeted model selection.
struct BudgetTrial {
    int id = 0;
    double metric = 0.0;
    int selected = 0;
};

/// Among trials meeting the feature budget, returns the one with the best
/// validation metric. Throws if no trial qualifies, reporting the smallest
/// achieved count.
inline BudgetTrial select_within_budget(const std::vector<BudgetTrial>& trials, int budget,
                                        bool higher_is_better) {
    if (trials.empty()) throw std::invalid_argument("select_within_budget: no trials");
    const BudgetTrial* best = nullptr;
    int smallest = trials.front().selected;
    for (const auto& t : trials) {
        smallest = std::min(smallest, t.selected);
        if (t.selected > budget) continue;
        if (!best || (higher_is_better ? t.metric > best->metric : t.metric < best->metric))
            best = &t;
    }
    if (!best)
        throw std::runtime_error("select_within_budget: no trial meets budget " +
                                 std::to_string(budget) + "; smallest achieved count is " +
                                 std::to_string(smallest));
    return *best;
}

}  // namespace skinny
