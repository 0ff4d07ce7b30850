#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinny/tree_model.hpp"

namespace skinny {

enum class LossKind { least_squares, cross_entropy };

inline const char* loss_name(LossKind k) {
    return k == LossKind::least_squares ? "ls" : "xent";
}

/// Training targets. Least squares reads `values` (N x c); cross-entropy
/// reads integer `labels` in [0, C). With c == 1, cross-entropy means a
/// single sigmoid logit and labels are {0, 1}.
struct Targets {
    Eigen::MatrixXd values;
    Eigen::VectorXi labels;

    static Targets regression(Eigen::MatrixXd y) {
        Targets t;
        t.values = std::move(y);
        return t;
    }
    static Targets classification(Eigen::VectorXi y) {
        Targets t;
        t.labels = std::move(y);
        return t;
    }

    Eigen::Index size(LossKind loss) const {
        return loss == LossKind::least_squares ? values.rows() : labels.size();
    }

    Targets rows(const std::vector<int>& idx) const {
        Targets t;
        if (values.size() > 0) {
            t.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
            for (std::size_t r = 0; r < idx.size(); ++r) t.values.row(r) = values.row(idx[r]);
        }
        if (labels.size() > 0) {
            t.labels.resize(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t r = 0; r < idx.size(); ++r) t.labels[r] = labels[idx[r]];
        }
        return t;
    }
};

struct GradientPair {
    Eigen::MatrixXd grad_w;   // same shape as model.weights
    Eigen::MatrixXd grad_o;   // same shape as model.leaves
    Eigen::VectorXd grad_bias;  // same shape as model.biases (empty unless use_bias)
};

struct BackwardResult {
    double loss = 0.0;
    GradientPair grad;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-sample loss and dL/df for one prediction row. Throws on non-finite
/// intermediates, identifying the sample.
inline double per_sample_loss_and_residual(LossKind loss, const Targets& y, Eigen::Index sample,
                                           const Eigen::Ref<const Eigen::RowVectorXd>& f,
                                           Eigen::Ref<Eigen::RowVectorXd> residual) {
    if (!f.allFinite())
        throw std::runtime_error("non-finite prediction at sample " + std::to_string(sample));
    if (loss == LossKind::least_squares) {
        residual = f - y.values.row(sample);
        return 0.5 * residual.squaredNorm();
    }
    if (f.size() == 1) {  // single-logit sigmoid
        const double z = f[0];
        const double label = static_cast<double>(y.labels[sample]);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        residual[0] = sig - label;
        // log(1 + e^z) - y z, computed stably
        return std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));
    }
    const int label = y.labels[sample];
    if (label < 0 || label >= f.size())
        throw std::runtime_error("label out of range at sample " + std::to_string(sample));
    const double zmax = f.maxCoeff();
    const double lse = zmax + std::log((f.array() - zmax).exp().sum());
    residual = (f.array() - lse).exp();
    residual[label] -= 1.0;
    return lse - f[label];
}

/// Forward state for a batch: pre-activations, activations and their
/// derivatives, reach probabilities of internal nodes and leaves, and the
/// predictions. Reused across mini-batch steps to avoid reallocation.
struct ForwardWorkspace {
    RowMatrix preact;   // B x m|I|
    RowMatrix act;      // B x m|I|   S(a)
    RowMatrix dact;     // B x m|I|   S'(a)
    RowMatrix q_int;    // B x m|I|   reach probability of internal nodes
    RowMatrix q_leaf;   // B x m|L|
    Eigen::MatrixXd f;  // B x c
    RowMatrix residual; // B x c
    RowMatrix v_leaf;   // B x m|L|   dLoss/dq_leaf
    RowMatrix da;       // B x m|I|   dLoss/d(preact)
    std::vector<double> heap;

    void forward(const EnsembleModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                 bool need_derivative) {
        const auto& cfg = model.config;
        const Eigen::Index B = X.rows();
        const int ni = cfg.internal_nodes();
        const int nl = cfg.leaves_per_tree();
        preact.noalias() = X * model.weights.transpose();
        if (cfg.use_bias) preact.rowwise() += model.biases.transpose();
        const double theta = cfg.activation_threshold;
        act.resize(B, preact.cols());
        if (need_derivative) dact.resize(B, preact.cols());
        for (Eigen::Index i = 0; i < preact.size(); ++i) {
            const double a = preact.data()[i];
            if (!std::isfinite(a))
                throw std::runtime_error("non-finite pre-activation at sample " +
                                         std::to_string(i / preact.cols()));
            act.data()[i] = smooth_step(a, theta);
            if (need_derivative) dact.data()[i] = smooth_step_derivative(a, theta);
        }
        q_int.resize(B, cfg.total_internal());
        q_leaf.resize(B, cfg.total_leaves());
        heap.resize(static_cast<std::size_t>(ni) + nl);
        for (Eigen::Index b = 0; b < B; ++b) {
            for (int j = 0; j < cfg.num_trees; ++j) {
                heap[0] = 1.0;
                const int base = j * ni;
                for (int i = 0; i < ni; ++i) {
                    const double s = act(b, base + i);
                    heap[2 * i + 1] = heap[i] * s;
                    heap[2 * i + 2] = heap[i] * (1.0 - s);
                }
                for (int i = 0; i < ni; ++i) q_int(b, base + i) = heap[i];
                for (int l = 0; l < nl; ++l) q_leaf(b, j * nl + l) = heap[ni + l];
            }
        }
        f.noalias() = q_leaf * model.leaves.transpose();
    }
};

}  // namespace detail

/// Mean data loss over the batch. Evaluates in row blocks so large sets
/// do not materialize the full probability matrix.
inline double loss_value(const Eigen::Ref<const Eigen::MatrixXd>& X, const Targets& y,
                         const EnsembleModel& model, LossKind loss) {
    if (X.cols() != model.config.num_features)
        throw std::invalid_argument("loss_value: feature dimension mismatch");
    const Eigen::Index N = X.rows();
    if (N < 1) throw std::invalid_argument("loss_value: empty batch");
    if (loss == LossKind::cross_entropy && y.labels.size() == 0)
        throw std::invalid_argument("loss_value: cross-entropy needs labels");
    if (loss == LossKind::least_squares && y.values.rows() != N)
        throw std::invalid_argument("loss_value: target rows mismatch");
    constexpr Eigen::Index kBlock = 2048;
    detail::ForwardWorkspace ws;
    double total = 0.0;
    Eigen::RowVectorXd residual(model.config.num_outputs);
    for (Eigen::Index start = 0; start < N; start += kBlock) {
        const Eigen::Index B = std::min(kBlock, N - start);
        ws.forward(model, X.middleRows(start, B), /*need_derivative=*/false);
        for (Eigen::Index b = 0; b < B; ++b)
            total += detail::per_sample_loss_and_residual(loss, y, start + b, ws.f.row(b), residual);
    }
    return total / static_cast<double>(N);
}

/// Analytic backward pass. Returns the mean batch loss and its exact
/// gradient with respect to weights, leaves, and biases. The ridge term is
/// not included here; the optimizer owns it.
///
/// The chain rule is evaluated without divisions: with q_i the probability
/// of reaching node i and u_i the expected downstream dLoss/dq value,
/// dLoss/d(preact_i) = q_i * S'(a_i) * (u_left - u_right).
inline BackwardResult backward(const Eigen::Ref<const Eigen::MatrixXd>& X, const Targets& y,
                               const EnsembleModel& model, LossKind loss,
                               detail::ForwardWorkspace* ws_opt = nullptr) {
    const auto& cfg = model.config;
    if (X.cols() != cfg.num_features) throw std::invalid_argument("backward: feature dimension mismatch");
    const Eigen::Index B = X.rows();
    if (B < 1) throw std::invalid_argument("backward: empty batch");
    if (y.size(loss) != B) throw std::invalid_argument("backward: target size mismatch");

    detail::ForwardWorkspace local;
    detail::ForwardWorkspace& ws = ws_opt ? *ws_opt : local;
    ws.forward(model, X, /*need_derivative=*/true);

    const int ni = cfg.internal_nodes();
    const int nl = cfg.leaves_per_tree();
    ws.residual.resize(B, cfg.num_outputs);
    double total_loss = 0.0;
    {
        Eigen::RowVectorXd res(cfg.num_outputs);
        for (Eigen::Index b = 0; b < B; ++b) {
            total_loss += detail::per_sample_loss_and_residual(loss, y, b, ws.f.row(b), res);
            ws.residual.row(b) = res;
        }
    }

    ws.v_leaf.noalias() = ws.residual * model.leaves;
    ws.da.resize(B, cfg.total_internal());
    std::vector<double>& u = ws.heap;
    u.resize(static_cast<std::size_t>(ni) + nl);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int j = 0; j < cfg.num_trees; ++j) {
            const int base = j * ni;
            for (int l = 0; l < nl; ++l) u[ni + l] = ws.v_leaf(b, j * nl + l);
            for (int i = ni - 1; i >= 0; --i) {
                const double s = ws.act(b, base + i);
                const double ul = u[2 * i + 1];
                const double ur = u[2 * i + 2];
                u[i] = s * ul + (1.0 - s) * ur;
                ws.da(b, base + i) = ws.q_int(b, base + i) * ws.dact(b, base + i) * (ul - ur);
            }
        }
    }

    const double inv_b = 1.0 / static_cast<double>(B);
    BackwardResult out;
    out.loss = total_loss * inv_b;
    out.grad.grad_w.noalias() = ws.da.transpose() * X;
    out.grad.grad_w *= inv_b;
    out.grad.grad_o.noalias() = ws.residual.transpose() * ws.q_leaf;
    out.grad.grad_o *= inv_b;
    if (cfg.use_bias) out.grad.grad_bias = ws.da.colwise().mean().transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference verification suite (backs the `gradcheck` subcommand).
// ---------------------------------------------------------------------------

struct GradcheckReport {
    int instances = 0;
    double max_rel_w = 0.0;
    double max_rel_o = 0.0;
    double max_rel_b = 0.0;
    double tolerance = 0.0;
    bool pass = false;

    double max_rel() const { return std::max(max_rel_w, std::max(max_rel_o, max_rel_b)); }
};

struct GradcheckOptions {
    int instances = 200;
    std::uint64_t seed = 42;
    double fd_step = 1e-5;
    double tolerance = 1e-5;
    double abs_floor = 1e-8;
    double knot_margin = 1e-3;  // keep pre-activations away from +-theta
    const Eigen::MatrixXd* sample_pool = nullptr;  // optional rows to draw X from
};

namespace detail {

inline bool near_knot(const EnsembleModel& model, const Eigen::MatrixXd& X, double margin) {
    const double theta = model.config.activation_threshold;
    Eigen::MatrixXd a = X * model.weights.transpose();
    if (model.config.use_bias) a.rowwise() += model.biases.transpose();
    return ((a.array() - theta).abs() < margin).any() ||
           ((a.array() + theta).abs() < margin).any();
}

}  // namespace detail

/// Compares every gradient coordinate against central finite differences on
/// randomly drawn small instances, both losses, sampling away from the
/// activation knots. The reported relative error uses a denominator floor of
/// abs_floor / tolerance, so `max_rel <= tolerance` is exactly the rule
/// |analytic - fd| <= max(abs_floor, tolerance * max(|analytic|, |fd|)).
inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
    Rng rng(seed_mix(opt.seed, 0x67c4ULL));
    GradcheckReport report;
    report.instances = opt.instances;
    report.tolerance = opt.tolerance;
    const double denom_floor = opt.abs_floor / opt.tolerance;

    auto update = [&](double analytic, double fd, double& slot) {
        const double err = std::abs(analytic - fd);
        const double rel = err / std::max({std::abs(analytic), std::abs(fd), denom_floor});
        if (rel > slot) slot = rel;
    };

    for (int inst = 0; inst < opt.instances; ++inst) {
        const LossKind loss = (inst % 2 == 0) ? LossKind::least_squares : LossKind::cross_entropy;
        EnsembleConfig cfg;
        cfg.num_trees = rng.uniform_int(1, 4);
        cfg.depth = rng.uniform_int(1, 3);
        cfg.use_bias = (inst % 4 == 3);
        cfg.activation_threshold = rng.uniform(0.5, 2.0);
        const bool multiclass = (loss == LossKind::cross_entropy) && (inst % 4 == 1);
        cfg.num_outputs = multiclass ? 3 : 1;

        const bool from_pool = opt.sample_pool && (inst % 5 == 0);
        cfg.num_features = from_pool ? static_cast<int>(opt.sample_pool->cols())
                                     : rng.uniform_int(2, 10);
        const int B = rng.uniform_int(1, 8);

        EnsembleModel model;
        Eigen::MatrixXd X(B, cfg.num_features);
        // redraw until every pre-activation clears the knot margin
        do {
            model = EnsembleModel::zeros(cfg);
            const double scale = 1.5 / std::sqrt(static_cast<double>(cfg.num_features));
            for (Eigen::Index i = 0; i < model.weights.size(); ++i)
                model.weights.data()[i] = rng.uniform(-scale, scale);
            for (Eigen::Index i = 0; i < model.leaves.size(); ++i)
                model.leaves.data()[i] = rng.normal();
            if (cfg.use_bias)
                for (Eigen::Index i = 0; i < model.biases.size(); ++i)
                    model.biases[i] = rng.uniform(-0.5, 0.5);
            for (Eigen::Index b = 0; b < B; ++b) {
                if (from_pool) {
                    X.row(b) = opt.sample_pool->row(
                        rng.uniform_int(static_cast<std::uint64_t>(opt.sample_pool->rows())));
                } else {
                    for (int k = 0; k < cfg.num_features; ++k) X(b, k) = rng.normal();
                }
            }
        } while (detail::near_knot(model, X, opt.knot_margin));

        Targets y;
        if (loss == LossKind::least_squares) {
            Eigen::MatrixXd vals(B, cfg.num_outputs);
            for (Eigen::Index i = 0; i < vals.size(); ++i) vals.data()[i] = rng.normal();
            y = Targets::regression(std::move(vals));
        } else {
            Eigen::VectorXi labels(B);
            const int num_classes = multiclass ? cfg.num_outputs : 2;
            for (Eigen::Index b = 0; b < B; ++b) labels[b] = rng.uniform_int(0, num_classes - 1);
            y = Targets::classification(std::move(labels));
        }

        const BackwardResult res = backward(X, y, model, loss);
        const double h = opt.fd_step;
        EnsembleModel probe = model;
        for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
            probe.weights.data()[i] = model.weights.data()[i] + h;
            const double up = loss_value(X, y, probe, loss);
            probe.weights.data()[i] = model.weights.data()[i] - h;
            const double dn = loss_value(X, y, probe, loss);
            probe.weights.data()[i] = model.weights.data()[i];
            update(res.grad.grad_w.data()[i], (up - dn) / (2 * h), report.max_rel_w);
        }
        for (Eigen::Index i = 0; i < model.leaves.size(); ++i) {
            probe.leaves.data()[i] = model.leaves.data()[i] + h;
            const double up = loss_value(X, y, probe, loss);
            probe.leaves.data()[i] = model.leaves.data()[i] - h;
            const double dn = loss_value(X, y, probe, loss);
            probe.leaves.data()[i] = model.leaves.data()[i];
            update(res.grad.grad_o.data()[i], (up - dn) / (2 * h), report.max_rel_o);
        }
        if (cfg.use_bias) {
            for (Eigen::Index i = 0; i < model.biases.size(); ++i) {
                probe.biases[i] = model.biases[i] + h;
                const double up = loss_value(X, y, probe, loss);
                probe.biases[i] = model.biases[i] - h;
                const double dn = loss_value(X, y, probe, loss);
                probe.biases[i] = model.biases[i];
                update(res.grad.grad_bias[i], (up - dn) / (2 * h), report.max_rel_b);
            }
        }
    }
    report.pass = report.max_rel() <= opt.tolerance;
    return report;
}

}  // namespace skinny
