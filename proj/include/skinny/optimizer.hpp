#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinny/gradients.hpp"
#include "skinny/prox.hpp"
#include "skinny/rng.hpp"
#include "skinny/tree_model.hpp"

namespace skinny {

enum class PenaltyMode { group_l0_l2, group_lasso, none };

struct TrainConfig {
    double lambda0 = 0.0;                         // fixed group-l0 strength (ignored with scheduler)
    double lambda2 = 0.0;                         // ridge on hyperplanes, normalized by m|I|
    double lambda1 = 0.0;                         // group-lasso strength
    double learning_rate = 0.1;
    int batch_size = 32;
    int epochs = 10;
    PenaltyMode penalty = PenaltyMode::group_l0_l2;
    std::optional<SchedulerConfig> scheduler;     // dense-to-sparse ramp for lambda0
    std::uint64_t seed = 0;
    LossKind loss = LossKind::least_squares;
    std::optional<double> leaf_projection_bound;  // ||O||_2 ball radius, off by default

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
        if (epochs < 1) throw std::invalid_argument("epochs must be positive");
        if (lambda0 < 0.0 || lambda1 < 0.0 || lambda2 < 0.0)
            throw std::invalid_argument("penalty strengths must be >= 0");
        if (scheduler) scheduler->validate();
        if (scheduler && penalty != PenaltyMode::group_l0_l2)
            throw std::invalid_argument("scheduler applies to the group_l0_l2 penalty only");
        if (leaf_projection_bound && !(*leaf_projection_bound > 0.0))
            throw std::invalid_argument("leaf_projection_bound must be positive");
    }
};

/// Thrown when training hits a non-finite quantity; carries enough context
/// to locate the step.
struct TrainAbort : std::runtime_error {
    int epoch;
    std::int64_t step;
    std::string tensor;
    TrainAbort(int epoch_, std::int64_t step_, std::string tensor_, const std::string& what_)
        : std::runtime_error("training aborted at epoch " + std::to_string(epoch_) + ", step " +
                             std::to_string(step_) + " (" + tensor_ + "): " + what_),
          epoch(epoch_), step(step_), tensor(std::move(tensor_)) {}
};

struct EpochStats {
    int epoch = 0;
    double objective = 0.0;    // mean batch data loss + penalty at epoch end
    double data_loss = 0.0;    // mean over the epoch's batches
    double penalty_value = 0.0;
    int selected = 0;
    double lambda0 = 0.0;      // value used at the epoch's last step
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double wall_time_sec = 0.0;
    int epochs_run = 0;
};

/// Optional held-out set evaluated once per epoch (used for trajectories).
struct EvalSet {
    const Eigen::MatrixXd* X = nullptr;
    const Targets* y = nullptr;
};

namespace detail {

inline double penalty_value(const EnsembleModel& model, const TrainConfig& cfg, double lambda0_now) {
    const auto& c = model.config;
    switch (cfg.penalty) {
        case PenaltyMode::group_l0_l2: {
            const double ridge = cfg.lambda2 / static_cast<double>(c.total_internal());
            return lambda0_now * selected_count(model) + ridge * model.weights.squaredNorm();
        }
        case PenaltyMode::group_lasso: {
            const double scale = cfg.lambda1 / std::sqrt(static_cast<double>(c.total_internal()));
            double sum = 0.0;
            for (Eigen::Index k = 0; k < model.weights.cols(); ++k) sum += model.weights.col(k).norm();
            return scale * sum;
        }
        case PenaltyMode::none: return 0.0;
    }
    return 0.0;
}

inline void project_leaves(EnsembleModel& model, double bound) {
    const double nrm = model.leaves.norm();
    if (nrm > bound) model.leaves *= bound / nrm;
}

}  // namespace detail

/// Proximal mini-batch gradient descent. Per step: sample a batch (epoch-wise
/// Fisher-Yates shuffle, last partial batch kept), take a plain gradient step
/// on the leaves, and a gradient step on the hyperplanes including the ridge
/// term followed by the group prox. The scheduler advances t once per step.
/// Fully deterministic given the config seed.
inline std::pair<EnsembleModel, TrainReport> train(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                   const Targets& y, const EnsembleConfig& model_cfg,
                                                   const TrainConfig& cfg,
                                                   const EvalSet* val = nullptr) {
    model_cfg.validate();
    cfg.validate();
    const Eigen::Index N = X.rows();
    if (N < 1) throw std::invalid_argument("train: empty training set");
    if (X.cols() != model_cfg.num_features) throw std::invalid_argument("train: feature dimension mismatch");
    if (y.size(cfg.loss) != N) throw std::invalid_argument("train: target size mismatch");
    if (cfg.batch_size > N) throw std::invalid_argument("train: batch_size exceeds the training set");

    const auto t_start = std::chrono::steady_clock::now();
    Rng rng(seed_mix(cfg.seed, 0x7261ULL));
    EnsembleModel model = EnsembleModel::init(model_cfg, rng);

    const double eta = cfg.learning_rate;
    const double ridge_coef =
        (cfg.penalty == PenaltyMode::group_l0_l2)
            ? 2.0 * cfg.lambda2 / static_cast<double>(model_cfg.total_internal())
            : 0.0;

    std::vector<int> order(N);
    for (Eigen::Index i = 0; i < N; ++i) order[i] = static_cast<int>(i);

    TrainReport report;
    report.epochs.reserve(cfg.epochs);
    detail::ForwardWorkspace ws;
    Eigen::MatrixXd xbatch;
    std::int64_t t = 0;
    double lambda0_now = cfg.scheduler ? scheduler_lambda0(0, *cfg.scheduler) : cfg.lambda0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (Eigen::Index start = 0; start < N; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, N - start);
            xbatch.resize(b, X.cols());
            std::vector<int> rows(order.begin() + start, order.begin() + start + b);
            for (Eigen::Index r = 0; r < b; ++r) xbatch.row(r) = X.row(rows[r]);
            Targets ybatch = y.rows(rows);

            BackwardResult res;
            try {
                res = backward(xbatch, ybatch, model, cfg.loss, &ws);
            } catch (const std::runtime_error& e) {
                throw TrainAbort(epoch, t, "loss", e.what());
            }
            if (!std::isfinite(res.loss)) throw TrainAbort(epoch, t, "loss", "non-finite batch loss");
            loss_sum += res.loss;
            ++batches;

            model.leaves.noalias() -= eta * res.grad.grad_o;
            if (cfg.leaf_projection_bound) detail::project_leaves(model, *cfg.leaf_projection_bound);
            if (model_cfg.use_bias) model.biases.noalias() -= eta * res.grad.grad_bias;

            lambda0_now = cfg.scheduler ? scheduler_lambda0(t, *cfg.scheduler) : cfg.lambda0;
            if (ridge_coef != 0.0) res.grad.grad_w.noalias() += ridge_coef * model.weights;
            model.weights.noalias() -= eta * res.grad.grad_w;
            switch (cfg.penalty) {
                case PenaltyMode::group_l0_l2:
                    hard_threshold_group_inplace(model.weights, eta, lambda0_now);
                    break;
                case PenaltyMode::group_lasso:
                    soft_threshold_group_inplace(model.weights, eta, cfg.lambda1,
                                                 model_cfg.num_trees, model_cfg.internal_nodes());
                    break;
                case PenaltyMode::none: break;
            }
            ++t;
        }

        if (!model.weights.allFinite()) throw TrainAbort(epoch, t, "weights", "non-finite entries");
        if (!model.leaves.allFinite()) throw TrainAbort(epoch, t, "leaves", "non-finite entries");

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.data_loss = loss_sum / batches;
        stats.lambda0 = lambda0_now;
        stats.penalty_value = detail::penalty_value(model, cfg, lambda0_now);
        stats.objective = stats.data_loss + stats.penalty_value;
        stats.selected = selected_count(model);
        if (val && val->X && val->y) stats.val_loss = loss_value(*val->X, *val->y, model, cfg.loss);
        report.epochs.push_back(stats);
    }

    report.epochs_run = cfg.epochs;
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------
// Descent certificate: empirical check of the full-batch descent guarantee.
// ---------------------------------------------------------------------------

struct DescentReport {
    bool ok = false;            // an eta with zero violations was found
    double eta_used = 0.0;
    int halvings = 0;
    int violations = 0;         // under eta_used
    int first_violation_step = -1;
    double max_w_norm = 0.0;
    double w_norm_bound = 0.0;  // sqrt(c0 m|I| / lambda2)
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> objectives;
};

/// Runs T full-batch proximal steps recording the full objective
/// (data loss + lambda0 * |support| + ridge) after every step. If the
/// sequence ever increases beyond tolerance, the learning rate is halved and
/// the run restarts from the same initialization, up to max_halvings times.
/// Also tracks ||W||_F against the bound implied by a non-increasing
/// objective with lambda2 > 0.
inline DescentReport descent_certificate(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                         const Targets& y, const EnsembleConfig& model_cfg,
                                         const TrainConfig& cfg_in, int steps = 500,
                                         int max_halvings = 20, double tolerance = 1e-10) {
    model_cfg.validate();
    TrainConfig cfg = cfg_in;
    cfg.validate();
    if (!(cfg.lambda2 > 0.0)) throw std::invalid_argument("descent_certificate: lambda2 must be > 0");
    if (cfg.loss != LossKind::least_squares)
        throw std::invalid_argument("descent_certificate: least-squares loss required");
    if (cfg.scheduler) throw std::invalid_argument("descent_certificate: constant lambda0 required");
    if (!cfg.leaf_projection_bound) cfg.leaf_projection_bound = 1e6;

    const Eigen::Index N = X.rows();
    Rng rng(seed_mix(cfg.seed, 0x7261ULL));
    const EnsembleModel init = EnsembleModel::init(model_cfg, rng);
    const double ridge_coef = 2.0 * cfg.lambda2 / static_cast<double>(model_cfg.total_internal());

    auto objective = [&](const EnsembleModel& m) {
        return loss_value(X, y, m, cfg.loss) +
               detail::penalty_value(m, cfg, cfg.lambda0);
    };

    DescentReport report;
    report.initial_objective = objective(init);
    report.w_norm_bound = std::sqrt(report.initial_objective *
                                    static_cast<double>(model_cfg.total_internal()) / cfg.lambda2);

    double eta = cfg.learning_rate;
    detail::ForwardWorkspace ws;
    for (int attempt = 0; attempt <= max_halvings; ++attempt) {
        EnsembleModel model = init;
        double prev = report.initial_objective;
        report.objectives.assign(1, prev);
        report.violations = 0;
        report.first_violation_step = -1;
        report.max_w_norm = model.weights.norm();
        for (int step = 0; step < steps; ++step) {
            BackwardResult res = backward(X, y, model, cfg.loss, &ws);
            model.leaves.noalias() -= eta * res.grad.grad_o;
            detail::project_leaves(model, *cfg.leaf_projection_bound);
            if (model_cfg.use_bias) model.biases.noalias() -= eta * res.grad.grad_bias;
            res.grad.grad_w.noalias() += ridge_coef * model.weights;
            model.weights.noalias() -= eta * res.grad.grad_w;
            hard_threshold_group_inplace(model.weights, eta, cfg.lambda0);

            const double obj = objective(model);
            report.objectives.push_back(obj);
            if (obj > prev + tolerance) {
                ++report.violations;
                if (report.first_violation_step < 0) report.first_violation_step = step;
            }
            prev = obj;
            report.max_w_norm = std::max(report.max_w_norm, model.weights.norm());
        }
        report.eta_used = eta;
        report.halvings = attempt;
        report.final_objective = report.objectives.back();
        if (report.violations == 0) {
            report.ok = true;
            break;
        }
        eta *= 0.5;
    }
    return report;
}

}  // namespace skinny
