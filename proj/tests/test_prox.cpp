#include <catch2/catch_amalgamated.hpp>

#include "skinny/prox.hpp"
#include "test_util.hpp"

using namespace skinny;

namespace {

double l0_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Z, double eta, double lambda0) {
    double obj = (W - Z).squaredNorm() / (2.0 * eta);
    for (Eigen::Index k = 0; k < W.cols(); ++k)
        if ((W.col(k).array() != 0.0).any()) obj += lambda0;
    return obj;
}

/// Enumerates every support pattern, solves the restricted problem in closed
/// form (keep the group verbatim or zero it), and returns the best objective.
double l0_brute_force(const Eigen::MatrixXd& Z, double eta, double lambda0) {
    const int p = static_cast<int>(Z.cols());
    double best = std::numeric_limits<double>::infinity();
    for (unsigned pattern = 0; pattern < (1u << p); ++pattern) {
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
        for (int k = 0; k < p; ++k)
            if (pattern & (1u << k)) W.col(k) = Z.col(k);
        best = std::min(best, l0_objective(W, Z, eta, lambda0));
    }
    return best;
}

double lasso_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& Z, double eta,
                       double lambda1, int m, int ni) {
    double obj = (W - Z).squaredNorm() / (2.0 * eta);
    const double scale = lambda1 / std::sqrt(static_cast<double>(m) * ni);
    for (Eigen::Index k = 0; k < W.cols(); ++k) obj += scale * W.col(k).norm();
    return obj;
}

/// Numeric group-lasso minimizer. Geometry pins any minimizer to the segment
/// [0, Z_k] per group, leaving a 1-d convex problem in the scaling, solved by
/// golden-section search.
Eigen::MatrixXd lasso_numeric_minimizer(const Eigen::MatrixXd& Z, double eta, double lambda1,
                                        int m, int ni) {
    const double penalty_scale = lambda1 / std::sqrt(static_cast<double>(m) * ni);
    Eigen::MatrixXd W = Z;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (Eigen::Index k = 0; k < Z.cols(); ++k) {
        const double znorm = Z.col(k).norm();
        auto g = [&](double alpha) {
            return (alpha - 1.0) * (alpha - 1.0) * znorm * znorm / (2.0 * eta) +
                   penalty_scale * alpha * znorm;
        };
        double lo = 0.0, hi = 1.0;
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        double g1 = g(x1), g2 = g(x2);
        for (int it = 0; it < 200; ++it) {
            if (g1 < g2) {
                hi = x2;
                x2 = x1;
                g2 = g1;
                x1 = hi - phi * (hi - lo);
                g1 = g(x1);
            } else {
                lo = x1;
                x1 = x2;
                g1 = g2;
                x2 = lo + phi * (hi - lo);
                g2 = g(x2);
            }
        }
        W.col(k) = 0.5 * (lo + hi) * Z.col(k);
    }
    return W;
}

}  // namespace

TEST_CASE("hard threshold keeps and zeroes groups by norm") {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(4, 2);
    Z.col(0) << 3.0, 0.0, 0.0, 0.0;  // norm 3
    Z.col(1) << 1.0, 0.0, 0.0, 0.0;  // norm 1
    const auto out = hard_threshold_group(Z, 0.5, 4.0);  // threshold sqrt(2*0.5*4) = 2
    CHECK(out.col(0) == Z.col(0));
    CHECK(out.col(1).isZero(0.0));

    SECTION("lambda0 = 0 is the identity") {
        Rng rng(70);
        Eigen::MatrixXd R = testutil::random_matrix(rng, 6, 5);
        CHECK(hard_threshold_group(R, 0.3, 0.0) == R);
    }
    SECTION("a group exactly at the threshold is kept") {
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(1, 1);
        T(0, 0) = 2.0;
        CHECK(hard_threshold_group(T, 0.5, 4.0)(0, 0) == 2.0);
    }
}

TEST_CASE("hard threshold attains the enumerated global minimum") {
    Rng rng(71);
    for (int inst = 0; inst < 100; ++inst) {
        const int p = rng.uniform_int(1, 12);
        const int rows = rng.uniform_int(1, 8);  // m * |I| collapsed
        Eigen::MatrixXd Z = testutil::random_matrix(rng, rows, p);
        const double eta = rng.log_uniform(1e-2, 1.0);
        const double lambda0 = rng.log_uniform(1e-3, 5.0);
        const auto out = hard_threshold_group(Z, eta, lambda0);
        const double got = l0_objective(out, Z, eta, lambda0);
        const double best = l0_brute_force(Z, eta, lambda0);
        REQUIRE(got <= best + 1e-10);
    }
}

TEST_CASE("hard threshold small-instance optimality over all 2^4 patterns") {
    Rng rng(72);
    Eigen::MatrixXd Z = testutil::random_matrix(rng, 1, 4);  // p=4, m=1, |I|=1
    const double eta = 0.2, lambda0 = 0.05;
    const auto out = hard_threshold_group(Z, eta, lambda0);
    CHECK(l0_objective(out, Z, eta, lambda0) <= l0_brute_force(Z, eta, lambda0) + 1e-12);
}

TEST_CASE("hard threshold properties") {
    Rng rng(73);
    SECTION("idempotence") {
        for (int i = 0; i < 50; ++i) {
            Eigen::MatrixXd Z = testutil::random_matrix(rng, 4, 6);
            const double eta = rng.log_uniform(1e-2, 1.0), l0 = rng.log_uniform(1e-3, 2.0);
            const auto once = hard_threshold_group(Z, eta, l0);
            CHECK(hard_threshold_group(once, eta, l0) == once);
        }
    }
    SECTION("separability over concatenated feature sets") {
        Eigen::MatrixXd Z = testutil::random_matrix(rng, 3, 8);
        const double eta = 0.4, l0 = 0.7;
        const auto whole = hard_threshold_group(Z, eta, l0);
        const auto left = hard_threshold_group(Z.leftCols(5), eta, l0);
        const auto right = hard_threshold_group(Z.rightCols(3), eta, l0);
        CHECK(whole.leftCols(5) == left);
        CHECK(whole.rightCols(3) == right);
    }
    SECTION("threshold depends only on the product eta*lambda0") {
        Eigen::MatrixXd Z = testutil::random_matrix(rng, 3, 6);
        for (double alpha : {0.5, 2.0, 7.0}) {
            CHECK(hard_threshold_group(Z, 0.3, 1.1) ==
                  hard_threshold_group(Z, 0.3 / alpha, alpha * 1.1));
        }
    }
    SECTION("support shrinks monotonically as lambda0 grows") {
        for (int i = 0; i < 30; ++i) {
            Eigen::MatrixXd Z = testutil::random_matrix(rng, 4, 10);
            const double eta = 0.2;
            const double small = rng.log_uniform(1e-3, 1.0);
            const double large = small * rng.uniform(1.0, 20.0);
            const auto a = hard_threshold_group(Z, eta, small);
            const auto b = hard_threshold_group(Z, eta, large);
            for (int k = 0; k < 10; ++k) {
                const bool in_a = (a.col(k).array() != 0.0).any();
                const bool in_b = (b.col(k).array() != 0.0).any();
                if (in_b) CHECK(in_a);  // larger penalty's support is a subset
            }
        }
    }
}

TEST_CASE("soft threshold formula cases") {
    // tau = eta*lambda1/sqrt(m|I|) = 2 with eta=1, lambda1=4, m=2, |I|=2
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(4, 2);
    Z.col(0) << 5.0, 0.0, 0.0, 0.0;
    Z.col(1) << 1.0, 0.0, 0.0, 0.0;
    const auto out = soft_threshold_group(Z, 1.0, 4.0, 2, 2);
    CHECK(out(0, 0) == Catch::Approx(3.0));  // scaled by 1 - 2/5 = 0.6
    CHECK(out.col(1).isZero(0.0));
    CHECK(soft_threshold_group(Z, 1.0, 0.0, 2, 2) == Z);
}

TEST_CASE("soft threshold matches a numeric minimizer") {
    Rng rng(74);
    for (int inst = 0; inst < 50; ++inst) {
        const int p = rng.uniform_int(1, 8);
        const int m = rng.uniform_int(1, 3);
        const int ni = rng.uniform_int(1, 7);
        Eigen::MatrixXd Z = testutil::random_matrix(rng, m * ni, p);
        const double eta = rng.log_uniform(1e-2, 1.0);
        const double lambda1 = rng.log_uniform(1e-2, 10.0);
        const auto closed = soft_threshold_group(Z, eta, lambda1, m, ni);
        const auto numeric = lasso_numeric_minimizer(Z, eta, lambda1, m, ni);
        const double a = lasso_objective(closed, Z, eta, lambda1, m, ni);
        const double b = lasso_objective(numeric, Z, eta, lambda1, m, ni);
        REQUIRE(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(b)));
        REQUIRE(a <= b + 1e-10);  // the closed form is never worse
    }
}

TEST_CASE("soft threshold beats plain subgradient descent iterates") {
    // Cross-check against the literal subgradient route at its achievable
    // accuracy.
    Rng rng(75);
    for (int inst = 0; inst < 10; ++inst) {
        const int p = 4, m = 2, ni = 3;
        Eigen::MatrixXd Z = testutil::random_matrix(rng, m * ni, p);
        const double eta = 0.5, lambda1 = 1.0;
        const double tau_scale = lambda1 / std::sqrt(static_cast<double>(m) * ni);
        Eigen::MatrixXd W = Z;
        const double mu = 1.0 / eta;  // strong convexity modulus
        for (int t = 1; t <= 20000; ++t) {
            Eigen::MatrixXd g = (W - Z) / eta;
            for (int k = 0; k < p; ++k) {
                const double nrm = W.col(k).norm();
                if (nrm > 0) g.col(k) += tau_scale * W.col(k) / nrm;
            }
            W -= (2.0 / (mu * (t + 1))) * g;
        }
        const auto closed = soft_threshold_group(Z, eta, lambda1, m, ni);
        const double a = lasso_objective(closed, Z, eta, lambda1, m, ni);
        const double b = lasso_objective(W, Z, eta, lambda1, m, ni);
        CHECK(a <= b + 1e-4);
    }
}

TEST_CASE("scheduler lambda0 values") {
    SchedulerConfig s;
    s.gamma = 1.0;
    s.temperature = 0.1;
    CHECK(scheduler_lambda0(0, s) == 0.0);
    CHECK(scheduler_lambda0(10, s) == Catch::Approx(1.0 - std::exp(-1.0)));
    CHECK(std::abs(scheduler_lambda0(400, s) - s.gamma) < 1e-9);
    CHECK_THROWS_AS(scheduler_lambda0(-1, s), std::invalid_argument);

    SECTION("monotone nondecreasing and bounded by gamma") {
        Rng rng(76);
        for (int i = 0; i < 50; ++i) {
            SchedulerConfig c;
            c.gamma = rng.log_uniform(1e-3, 100.0);
            c.temperature = rng.log_uniform(1e-5, 1.0);
            double prev = -1.0;
            for (std::int64_t t : {0LL, 1LL, 2LL, 5LL, 10LL, 100LL, 10000LL, 1000000LL}) {
                const double v = scheduler_lambda0(t, c);
                CHECK(v >= prev);
                CHECK(v <= c.gamma);
                prev = v;
            }
        }
    }
}
