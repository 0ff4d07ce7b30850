#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace skinny {

/// Group hard-thresholding: the closed-form minimizer of
///   (1/2 eta) ||W - Z||^2 + lambda0 * sum_k 1[W_k != 0]
/// applied column-wise (one column per feature group). A group survives
/// verbatim iff ||Z_k|| >= sqrt(2 eta lambda0); ties keep the group.
inline void hard_threshold_group_inplace(Eigen::MatrixXd& Z, double eta, double lambda0) {
    if (!(eta > 0.0)) throw std::invalid_argument("hard_threshold_group: eta must be positive");
    if (lambda0 < 0.0) throw std::invalid_argument("hard_threshold_group: lambda0 must be >= 0");
    if (lambda0 == 0.0) return;
    const double cutoff = 2.0 * eta * lambda0;  // squared-norm threshold
    for (Eigen::Index k = 0; k < Z.cols(); ++k) {
        const double sq = Z.col(k).squaredNorm();
        if (!std::isfinite(sq)) throw std::runtime_error("hard_threshold_group: non-finite group norm");
        if (sq < cutoff) Z.col(k).setZero();
    }
}

inline Eigen::MatrixXd hard_threshold_group(Eigen::MatrixXd Z, double eta, double lambda0) {
    hard_threshold_group_inplace(Z, eta, lambda0);
    return Z;
}

/// Group soft-thresholding with threshold tau = eta * lambda1 / sqrt(m |I|):
/// the prox of the group-lasso penalty (lambda1 / sqrt(m |I|)) sum_k ||W_k||.
/// Groups at or below tau become exact zeros; survivors shrink by tau.
inline void soft_threshold_group_inplace(Eigen::MatrixXd& Z, double eta, double lambda1,
                                         int num_trees, int internal_nodes) {
    if (!(eta > 0.0)) throw std::invalid_argument("soft_threshold_group: eta must be positive");
    if (lambda1 < 0.0) throw std::invalid_argument("soft_threshold_group: lambda1 must be >= 0");
    if (num_trees < 1 || internal_nodes < 1)
        throw std::invalid_argument("soft_threshold_group: bad group shape");
    const double tau = eta * lambda1 / std::sqrt(static_cast<double>(num_trees) * internal_nodes);
    if (tau == 0.0) return;
    for (Eigen::Index k = 0; k < Z.cols(); ++k) {
        const double nrm = Z.col(k).norm();
        if (!std::isfinite(nrm)) throw std::runtime_error("soft_threshold_group: non-finite group norm");
        if (nrm >= tau && nrm > 0.0)
            Z.col(k) *= (1.0 - tau / nrm);
        else
            Z.col(k).setZero();
    }
}

inline Eigen::MatrixXd soft_threshold_group(Eigen::MatrixXd Z, double eta, double lambda1,
                                            int num_trees, int internal_nodes) {
    soft_threshold_group_inplace(Z, eta, lambda1, num_trees, internal_nodes);
    return Z;
}

/// Dense-to-sparse schedule: lambda0 ramps from 0 toward gamma as
/// gamma * (1 - exp(-s t)), with t counting mini-batch steps.
struct SchedulerConfig {
    double gamma = 0.0;        // terminal penalty
    double temperature = 0.01; // ramp rate s

    void validate() const {
        if (gamma < 0.0) throw std::invalid_argument("scheduler gamma must be >= 0");
        if (!(temperature > 0.0)) throw std::invalid_argument("scheduler temperature must be positive");
    }
};

inline double scheduler_lambda0(std::int64_t t, const SchedulerConfig& sched) {
    if (t < 0) throw std::invalid_argument("scheduler_lambda0: t must be >= 0");
    return sched.gamma * (1.0 - std::exp(-sched.temperature * static_cast<double>(t)));
}

}  // namespace skinny
