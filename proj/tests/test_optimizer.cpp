#include <catch2/catch_amalgamated.hpp>

#include "skinny/data.hpp"
#include "skinny/optimizer.hpp"
#include "test_util.hpp"

using namespace skinny;

namespace {

struct Problem {
    Eigen::MatrixXd X;
    Targets y;
    EnsembleConfig model;
};

Problem small_regression(Rng& rng, int n = 32, int p = 6, int trees = 2, int depth = 2) {
    Problem pr;
    pr.X = testutil::random_matrix(rng, n, p);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    beta[0] = 1.0;
    beta[2] = -0.5;
    Eigen::MatrixXd y = pr.X * beta;
    for (int i = 0; i < n; ++i) y(i, 0) += 0.1 * rng.normal();
    pr.y = Targets::regression(std::move(y));
    pr.model.num_trees = trees;
    pr.model.depth = depth;
    pr.model.num_features = p;
    return pr;
}

}  // namespace

TEST_CASE("training is deterministic given the seed") {
    Rng rng(80);
    Problem pr = small_regression(rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 8;
    cfg.epochs = 12;
    cfg.lambda2 = 0.1;
    SchedulerConfig sched;
    sched.gamma = 2.0;
    sched.temperature = 0.05;
    cfg.scheduler = sched;
    cfg.seed = 777;

    auto [m1, r1] = train(pr.X, pr.y, pr.model, cfg);
    auto [m2, r2] = train(pr.X, pr.y, pr.model, cfg);
    CHECK(m1.weights == m2.weights);
    CHECK(m1.leaves == m2.leaves);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
        CHECK(r1.epochs[e].data_loss == r2.epochs[e].data_loss);
        CHECK(r1.epochs[e].selected == r2.epochs[e].selected);
    }

    cfg.seed = 778;
    auto [m3, r3] = train(pr.X, pr.y, pr.model, cfg);
    CHECK(m1.leaves != m3.leaves);
}

TEST_CASE("a huge scheduler gamma zeroes every group") {
    Rng rng(81);
    Problem pr = small_regression(rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 16;
    cfg.epochs = 20;
    SchedulerConfig sched;
    sched.gamma = 1e6;
    sched.temperature = 0.5;
    cfg.scheduler = sched;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg);
    CHECK(selected_count(model) == 0);
    CHECK(report.epochs.back().selected == 0);

    // with no surviving hyperplanes the prediction is input-independent
    Eigen::MatrixXd probe = testutil::random_matrix(rng, 4, 6);
    const Eigen::MatrixXd preds = predict_batch(probe, model);
    for (int r = 1; r < 4; ++r) CHECK(preds(r, 0) == preds(0, 0));
}

TEST_CASE("full-batch plain GD with tiny step is non-increasing") {
    Rng rng(82);
    Problem pr = small_regression(rng, 24, 5, 2, 2);
    TrainConfig cfg;
    cfg.penalty = PenaltyMode::none;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 24;  // full batch
    cfg.epochs = 60;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg);
    // one batch per epoch, so the per-epoch data loss is the pre-update
    // full objective; descent means this sequence never increases
    for (std::size_t e = 1; e < report.epochs.size(); ++e)
        CHECK(report.epochs[e].data_loss <= report.epochs[e - 1].data_loss + 1e-12);
}

TEST_CASE("scheduler advances once per mini-batch step") {
    Rng rng(83);
    Problem pr = small_regression(rng, 20, 4);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 6;  // 4 batches per epoch (last one partial)
    cfg.epochs = 3;
    SchedulerConfig sched;
    sched.gamma = 1.0;
    sched.temperature = 0.01;
    cfg.scheduler = sched;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg);
    const int steps_per_epoch = 4;
    for (int e = 0; e < 3; ++e) {
        const std::int64_t last_t = static_cast<std::int64_t>(e + 1) * steps_per_epoch - 1;
        CHECK(report.epochs[e].lambda0 == Catch::Approx(scheduler_lambda0(last_t, sched)));
    }
}

TEST_CASE("group lasso mode shrinks and selects") {
    Rng rng(84);
    Problem pr = small_regression(rng, 40, 8, 2, 2);
    TrainConfig cfg;
    cfg.penalty = PenaltyMode::group_lasso;
    cfg.lambda1 = 5.0;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 20;
    cfg.epochs = 40;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg);
    CHECK(selected_count(model) < 8);  // strong lambda1 must drop something
    for (const auto& e : report.epochs) CHECK(e.penalty_value >= 0.0);
}

TEST_CASE("leaf projection keeps the leaf norm inside the ball") {
    Rng rng(85);
    Problem pr = small_regression(rng, 30, 5);
    TrainConfig cfg;
    cfg.penalty = PenaltyMode::none;
    cfg.learning_rate = 0.5;
    cfg.batch_size = 30;
    cfg.epochs = 25;
    cfg.leaf_projection_bound = 0.05;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg);
    CHECK(model.leaves.norm() <= 0.05 + 1e-12);
}

TEST_CASE("validation hook records per-epoch loss") {
    Rng rng(86);
    Problem pr = small_regression(rng, 30, 5);
    Eigen::MatrixXd xv = testutil::random_matrix(rng, 10, 5);
    Targets yv = Targets::regression(testutil::random_matrix(rng, 10, 1));
    EvalSet val{&xv, &yv};
    TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.epochs = 5;
    cfg.learning_rate = 0.01;
    auto [model, report] = train(pr.X, pr.y, pr.model, cfg, &val);
    for (const auto& e : report.epochs) CHECK(std::isfinite(e.val_loss));
    auto [model2, report2] = train(pr.X, pr.y, pr.model, cfg);
    for (const auto& e : report2.epochs) CHECK(!std::isfinite(e.val_loss));
}

TEST_CASE("config validation") {
    Rng rng(87);
    Problem pr = small_regression(rng, 10, 4);
    TrainConfig cfg;
    cfg.batch_size = 11;  // exceeds N
    CHECK_THROWS_AS(train(pr.X, pr.y, pr.model, cfg), std::invalid_argument);
    cfg.batch_size = 4;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train(pr.X, pr.y, pr.model, cfg), std::invalid_argument);
    cfg.learning_rate = 0.1;
    cfg.penalty = PenaltyMode::group_lasso;
    cfg.scheduler = SchedulerConfig{1.0, 0.1};
    CHECK_THROWS_AS(train(pr.X, pr.y, pr.model, cfg), std::invalid_argument);
}

TEST_CASE("divergence aborts with a diagnostic") {
    Rng rng(88);
    Problem pr = small_regression(rng, 16, 4, 4, 3);
    TrainConfig cfg;
    cfg.penalty = PenaltyMode::none;
    cfg.learning_rate = 1e9;
    cfg.batch_size = 8;
    cfg.epochs = 50;
    try {
        train(pr.X, pr.y, pr.model, cfg);
        FAIL("expected TrainAbort");
    } catch (const TrainAbort& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("descent certificate finds a workable step size") {
    Rng rng(89);
    for (int inst = 0; inst < 3; ++inst) {
        Problem pr = small_regression(rng, 32, 6, 2, 2);
        TrainConfig cfg;
        cfg.batch_size = 32;
        cfg.learning_rate = 0.5;  // deliberately too big; halving must kick in
        cfg.lambda2 = 0.5;
        cfg.lambda0 = (inst == 0) ? 0.0 : 1e-3;
        cfg.seed = 1000 + inst;
        const DescentReport rep = descent_certificate(pr.X, pr.y, pr.model, cfg, 120);
        INFO("eta " << rep.eta_used << " halvings " << rep.halvings);
        REQUIRE(rep.ok);
        CHECK(rep.violations == 0);
        CHECK(rep.max_w_norm <= rep.w_norm_bound + 1e-9);
        CHECK(rep.final_objective <= rep.initial_objective + 1e-12);
        CHECK(rep.objectives.size() == 121);
    }
}

TEST_CASE("descent certificate rejects unsupported setups") {
    Rng rng(90);
    Problem pr = small_regression(rng, 16, 4);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.lambda2 = 0.0;
    CHECK_THROWS_AS(descent_certificate(pr.X, pr.y, pr.model, cfg), std::invalid_argument);
    cfg.lambda2 = 0.1;
    cfg.loss = LossKind::cross_entropy;
    CHECK_THROWS_AS(descent_certificate(pr.X, pr.y, pr.model, cfg), std::invalid_argument);
}
