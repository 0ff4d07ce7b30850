#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinny/rng.hpp"

namespace skinny {

/// Structural configuration of a soft tree ensemble: m perfect binary trees
/// of depth d over p features with c outputs. Split nodes route samples with
/// the smooth-step activation saturating at +-activation_threshold.
struct EnsembleConfig {
    int num_trees = 1;
    int depth = 1;
    int num_features = 0;
    int num_outputs = 1;
    double activation_threshold = 1.0;
    bool use_bias = false;

    int internal_nodes() const { return (1 << depth) - 1; }
    int leaves_per_tree() const { return 1 << depth; }
    int total_internal() const { return num_trees * internal_nodes(); }
    int total_leaves() const { return num_trees * leaves_per_tree(); }

    void validate() const {
        if (num_trees < 1) throw std::invalid_argument("num_trees must be positive");
        if (depth < 1) throw std::invalid_argument("depth must be positive");
        if (num_features < 1) throw std::invalid_argument("num_features must be positive");
        if (num_outputs < 1) throw std::invalid_argument("num_outputs must be positive");
        if (!(activation_threshold > 0.0) || !std::isfinite(activation_threshold))
            throw std::invalid_argument("activation_threshold must be positive and finite");
    }
};

/// Cubic smooth-step: 0 below -theta, 1 above theta, 3t^2 - 2t^3 in between
/// with t = (x + theta) / (2 theta). C^1 everywhere, derivative vanishes
/// outside [-theta, theta].
inline double smooth_step(double x, double theta) {
    if (!std::isfinite(x)) throw std::invalid_argument("smooth_step: non-finite input");
    if (!(theta > 0.0)) throw std::invalid_argument("smooth_step: theta must be positive");
    if (x <= -theta) return 0.0;
    if (x >= theta) return 1.0;
    const double t = (x + theta) / (2.0 * theta);
    return t * t * (3.0 - 2.0 * t);
}

inline double smooth_step_derivative(double x, double theta) {
    if (!std::isfinite(x)) throw std::invalid_argument("smooth_step_derivative: non-finite input");
    if (!(theta > 0.0)) throw std::invalid_argument("smooth_step_derivative: theta must be positive");
    if (x <= -theta || x >= theta) return 0.0;
    const double t = (x + theta) / (2.0 * theta);
    return 3.0 * t * (1.0 - t) / theta;
}

/// Which features carry any weight. selected[k] is true iff some entry of
/// the k-th feature's weight slice is nonzero (exact test: the prox writes
/// literal zeros, so no tolerance is involved).
struct SupportMask {
    std::vector<std::uint8_t> selected;

    int count() const {
        int c = 0;
        for (auto b : selected) c += (b != 0);
        return c;
    }

    std::vector<int> indices() const {
        std::vector<int> out;
        for (int k = 0; k < static_cast<int>(selected.size()); ++k)
            if (selected[k]) out.push_back(k);
        return out;
    }
};

/// The ensemble in tensor form.
///
/// weights: (m*|I|) x p, row j*|I| + i holds the hyperplane of split node i
///          of tree j; column k is the k-th feature's group (the object the
///          group penalty acts on).
/// leaves:  c x (m*|L|), column j*|L| + l holds the output vector of leaf l
///          of tree j.
/// biases:  per split node, present only when use_bias; excluded from the
///          group structure (they belong to no feature).
struct EnsembleModel {
    EnsembleConfig config;
    Eigen::MatrixXd weights;
    Eigen::VectorXd biases;
    Eigen::MatrixXd leaves;

    int node_row(int tree, int node) const { return tree * config.internal_nodes() + node; }
    int leaf_col(int tree, int leaf) const { return tree * config.leaves_per_tree() + leaf; }

    static EnsembleModel zeros(const EnsembleConfig& cfg) {
        cfg.validate();
        EnsembleModel m;
        m.config = cfg;
        m.weights = Eigen::MatrixXd::Zero(cfg.total_internal(), cfg.num_features);
        m.leaves = Eigen::MatrixXd::Zero(cfg.num_outputs, cfg.total_leaves());
        if (cfg.use_bias) m.biases = Eigen::VectorXd::Zero(cfg.total_internal());
        return m;
    }

    /// Hyperplane weights use the standard dense-layer uniform init with
    /// limit sqrt(6 / (p + m|I|)). This keeps initial pre-activations mostly
    /// inside the non-saturated region and starts feature-group norms at a
    /// scale commensurate with the hard-threshold cutoffs reached during
    /// dense-to-sparse ramps. Leaves start at zero (neutral predictor).
    static EnsembleModel init(const EnsembleConfig& cfg, Rng& rng) {
        EnsembleModel m = zeros(cfg);
        const double limit =
            std::sqrt(6.0 / static_cast<double>(cfg.num_features + cfg.total_internal()));
        for (int k = 0; k < m.weights.cols(); ++k)
            for (int n = 0; n < m.weights.rows(); ++n)
                m.weights(n, k) = rng.uniform(-limit, limit);
        return m;
    }
};

inline SupportMask support_mask(const EnsembleModel& model) {
    SupportMask mask;
    const int p = model.config.num_features;
    mask.selected.assign(p, 0);
    for (int k = 0; k < p; ++k)
        mask.selected[k] = (model.weights.col(k).array() != 0.0).any() ? 1 : 0;
    return mask;
}

inline int selected_count(const EnsembleModel& model) { return support_mask(model).count(); }

namespace detail {

/// Pre-activations of every split node for one sample, accumulated feature
/// by feature in ascending index order. The sparse path walks only the
/// selected indices; because unselected columns are exact zeros, both paths
/// produce bitwise-identical sums.
template <typename XRow>
void preactivations(const EnsembleModel& model, const XRow& x, const std::vector<int>* support,
                    Eigen::VectorXd& acc) {
    const int rows = static_cast<int>(model.weights.rows());
    acc.resize(rows);
    if (model.config.use_bias)
        acc = model.biases;
    else
        acc.setZero();
    auto accumulate = [&](int k) {
        const double xk = x(k);
        const double* wk = model.weights.col(k).data();
        for (int n = 0; n < rows; ++n) acc[n] += wk[n] * xk;
    };
    if (support) {
        for (int k : *support) accumulate(k);
    } else {
        for (int k = 0; k < model.config.num_features; ++k) accumulate(k);
    }
}

/// Root-to-node reach probabilities for one tree, heap order: internal
/// nodes 0..|I|-1 with children 2i+1, 2i+2; leaf l sits at heap index
/// |I| + l. S(w.x) is the probability of routing LEFT.
inline void node_reach_probabilities(const EnsembleModel& model, const Eigen::VectorXd& preacts,
                                     int tree, std::vector<double>& q) {
    const int ni = model.config.internal_nodes();
    const double theta = model.config.activation_threshold;
    q.assign(static_cast<std::size_t>(ni) + model.config.leaves_per_tree(), 0.0);
    q[0] = 1.0;
    for (int i = 0; i < ni; ++i) {
        const double s = smooth_step(preacts[model.node_row(tree, i)], theta);
        q[2 * i + 1] = q[i] * s;
        q[2 * i + 2] = q[i] * (1.0 - s);
    }
}

}  // namespace detail

/// Probability that a sample reaches the given leaf: the product over the
/// leaf's ancestors of the chosen-subtree routing probabilities.
template <typename XRow>
double leaf_reach_probability(const XRow& x, const EnsembleModel& model, int tree, int leaf) {
    const auto& cfg = model.config;
    if (tree < 0 || tree >= cfg.num_trees) throw std::out_of_range("leaf_reach_probability: tree index");
    if (leaf < 0 || leaf >= cfg.leaves_per_tree()) throw std::out_of_range("leaf_reach_probability: leaf index");
    if (x.size() != cfg.num_features) throw std::invalid_argument("leaf_reach_probability: feature dimension");
    Eigen::VectorXd acc;
    detail::preactivations(model, x, nullptr, acc);
    double prob = 1.0;
    int heap = cfg.internal_nodes() + leaf;
    while (heap > 0) {
        const int parent = (heap - 1) / 2;
        const double s = smooth_step(acc[model.node_row(tree, parent)], cfg.activation_threshold);
        prob *= (heap % 2 == 1) ? s : (1.0 - s);
        heap = parent;
    }
    return prob;
}

/// Ensemble prediction for one sample: sum over trees of the
/// probability-weighted leaf outputs. Passing a SupportMask activates the
/// sparse-inference path (unselected weight columns are never read).
template <typename XRow>
Eigen::VectorXd predict(const XRow& x, const EnsembleModel& model,
                        const SupportMask* mask = nullptr) {
    const auto& cfg = model.config;
    if (x.size() != cfg.num_features) throw std::invalid_argument("predict: feature dimension mismatch");
    std::vector<int> support;
    if (mask) {
        if (static_cast<int>(mask->selected.size()) != cfg.num_features)
            throw std::invalid_argument("predict: mask dimension mismatch");
        support = mask->indices();
    }
    Eigen::VectorXd acc;
    detail::preactivations(model, x, mask ? &support : nullptr, acc);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.num_outputs);
    std::vector<double> q;
    const int ni = cfg.internal_nodes();
    for (int j = 0; j < cfg.num_trees; ++j) {
        detail::node_reach_probabilities(model, acc, j, q);
        for (int l = 0; l < cfg.leaves_per_tree(); ++l)
            out += q[ni + l] * model.leaves.col(model.leaf_col(j, l));
    }
    return out;
}

inline Eigen::MatrixXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const EnsembleModel& model,
                                     const SupportMask* mask = nullptr) {
    const auto& cfg = model.config;
    if (X.cols() != cfg.num_features) throw std::invalid_argument("predict_batch: feature dimension mismatch");
    std::vector<int> support;
    if (mask) {
        if (static_cast<int>(mask->selected.size()) != cfg.num_features)
            throw std::invalid_argument("predict_batch: mask dimension mismatch");
        support = mask->indices();
    }
    Eigen::MatrixXd out(X.rows(), cfg.num_outputs);
    Eigen::VectorXd acc;
    std::vector<double> q;
    const int ni = cfg.internal_nodes();
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        detail::preactivations(model, X.row(r), mask ? &support : nullptr, acc);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(cfg.num_outputs);
        for (int j = 0; j < cfg.num_trees; ++j) {
            detail::node_reach_probabilities(model, acc, j, q);
            for (int l = 0; l < cfg.leaves_per_tree(); ++l)
                f += q[ni + l] * model.leaves.col(model.leaf_col(j, l));
        }
        out.row(r) = f.transpose();
    }
    return out;
}

}  // namespace skinny
