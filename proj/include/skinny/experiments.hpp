#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "skinny/data.hpp"
#include "skinny/metrics.hpp"
#include "skinny/optimizer.hpp"

namespace skinny {

namespace detail {

/// Runs fn(0..n-1) on a small pool. Work items own their outputs by index,
/// so results are deterministic regardless of scheduling. Exceptions are
/// captured and rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Random-search ranges for the synthetic grid (uniform or log-uniform draws).
struct HyperRanges {
    int trees_min = 1, trees_max = 50;
    int depth_min = 1, depth_max = 5;
    int batch_unit = 16, batch_mult_min = 1, batch_mult_max = 8;
    int epochs_min = 5, epochs_max = 500;
    double dsl_gamma = 100.0;
    double temp_min = 1e-4, temp_max = 0.1;
    double lambda2_min = 1e-2, lambda2_max = 1e2;
    double lr_min = 1e-3, lr_max = 1e-1;
    // activation width for grid models; wider than the library default keeps
    // pre-activations in the differentiable region on standardized designs
    double theta = 2.0;
};

struct TrialConfig {
    EnsembleConfig model;
    TrainConfig train;
};

/// One random-search draw. The batch size is clamped to the training-set
/// size so every drawn configuration is runnable.
inline TrialConfig draw_trial_config(Rng& rng, const HyperRanges& r, int p, int n_train) {
    TrialConfig t;
    t.model.num_trees = rng.uniform_int(r.trees_min, r.trees_max);
    t.model.depth = rng.uniform_int(r.depth_min, r.depth_max);
    t.model.num_features = p;
    t.model.num_outputs = 1;
    t.model.activation_threshold = r.theta;
    t.train.batch_size = std::min(n_train, r.batch_unit * rng.uniform_int(r.batch_mult_min, r.batch_mult_max));
    t.train.epochs = rng.uniform_int(r.epochs_min, r.epochs_max);
    t.train.penalty = PenaltyMode::group_l0_l2;
    SchedulerConfig sched;
    sched.gamma = r.dsl_gamma;
    sched.temperature = rng.log_uniform(r.temp_min, r.temp_max);
    t.train.scheduler = sched;
    t.train.lambda2 = rng.log_uniform(r.lambda2_min, r.lambda2_max);
    t.train.learning_rate = rng.log_uniform(r.lr_min, r.lr_max);
    t.train.loss = LossKind::least_squares;
    return t;
}

struct GridCell {
    double sigma = 0.5;
    int p = 256;
    int n = 1000;
    int k = 8;

    std::string name() const {
        return "sigma=" + std::to_string(sigma) + ",p=" + std::to_string(p) +
               ",n=" + std::to_string(n) + ",k=" + std::to_string(k);
    }
};

struct ExperimentGrid {
    std::vector<GridCell> cells;
    int repetitions = 5;
    int trials = 100;
    HyperRanges ranges;
    double noise_std = 0.5;
    int n_test = 10000;
    int threads = 0;  // 0 = all hardware threads
    std::uint64_t seed = 0;
    std::optional<int> feature_budget;  // restrict selection to trials within a budget

    void validate() const {
        if (cells.empty()) throw std::invalid_argument("grid: no cells");
        if (repetitions < 1) throw std::invalid_argument("grid: repetitions must be >= 1");
        if (trials < 1) throw std::invalid_argument("grid: trials must be >= 1");
        if (feature_budget && *feature_budget < 1)
            throw std::invalid_argument("grid: feature_budget must be positive");
    }
};

struct TrialOutcome {
    TrialConfig config;
    double val_mse = std::numeric_limits<double>::infinity();
    int selected = 0;
    bool failed = false;
};

struct RepetitionResult {
    int best_trial = -1;
    TrialConfig best_config;
    double best_val_mse = 0;
    double test_mse = 0;
    double f1 = 0;
    int selected = 0;
};

struct CellResult {
    GridCell cell;
    std::vector<RepetitionResult> reps;
    std::vector<double> rep_test_mse;
    std::vector<double> rep_f1;
    std::vector<int> rep_selected;
    int trials_per_rep = 0;
    double test_mse_mean = 0, test_mse_se = 0;
    double f1_mean = 0, f1_se = 0;
    double features_mean = 0, features_se = 0;
};

namespace detail {

inline std::pair<double, double> mean_and_stderr(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace detail

/// Per cell: `repetitions` independent simulations. Each repetition draws its
/// own dataset, runs `trials` random-search draws selecting the smallest
/// validation MSE on that draw, and scores the winning model on the
/// repetition's own test rows. Reported numbers are means and standard
/// errors across repetitions. All seeds derive from the grid seed via the
/// documented splitting scheme, so results are reproducible regardless of
/// thread count.
inline std::vector<CellResult> run_synthetic_grid(const ExperimentGrid& grid,
                                                  std::ostream* progress = nullptr) {
    grid.validate();
    std::vector<CellResult> results;
    for (std::size_t cell_i = 0; cell_i < grid.cells.size(); ++cell_i) {
        const GridCell& cell = grid.cells[cell_i];
        const std::uint64_t cell_seed = seed_mix(grid.seed, 0xCE11ULL, cell_i);

        CellResult result;
        result.cell = cell;
        result.trials_per_rep = grid.trials;

        for (int rep = 0; rep < grid.repetitions; ++rep) {
            SyntheticSpec spec;
            spec.n_samples = cell.n;
            spec.n_features = cell.p;
            spec.correlation = cell.sigma;
            spec.true_support_size = cell.k;
            spec.noise_std = grid.noise_std;
            spec.n_test = grid.n_test;
            spec.seed = seed_mix(cell_seed, 0xDAULL, static_cast<std::uint64_t>(rep));
            auto [ds, support] = generate_synthetic(spec);
            const Eigen::MatrixXd x_train = ds.x_rows(ds.train_idx);
            const Targets y_train = ds.targets_rows(ds.train_idx);
            const Eigen::MatrixXd x_val = ds.x_rows(ds.val_idx);
            Eigen::MatrixXd y_val(x_val.rows(), 1);
            for (std::size_t r = 0; r < ds.val_idx.size(); ++r)
                y_val.row(r) = ds.y_values.row(ds.val_idx[r]);
            const int n_train = static_cast<int>(ds.train_idx.size());

            std::vector<TrialOutcome> trials(grid.trials);
            detail::parallel_for(grid.trials, grid.threads, [&](int i) {
                Rng draw_rng(seed_mix(cell_seed, 0xC0ULL, static_cast<std::uint64_t>(rep),
                                      static_cast<std::uint64_t>(i)));
                TrialOutcome& out = trials[i];
                out.config = draw_trial_config(draw_rng, grid.ranges, cell.p, n_train);
                out.config.train.seed = seed_mix(cell_seed, 0x77ULL, static_cast<std::uint64_t>(rep),
                                                 static_cast<std::uint64_t>(i));
                try {
                    auto [model, report] = train(x_train, y_train, out.config.model, out.config.train);
                    const SupportMask mask = support_mask(model);
                    out.selected = mask.count();
                    out.val_mse = mse(predict_batch(x_val, model, &mask), y_val);
                    if (!std::isfinite(out.val_mse)) out.failed = true;
                } catch (const TrainAbort&) {
                    out.failed = true;
                }
                if (progress && (i + 1) % 25 == 0)
                    *progress << "[" << cell.name() << "] rep " << (rep + 1) << " trial " << (i + 1)
                              << "/" << grid.trials << "\n";
            });

            RepetitionResult rr;
            std::vector<BudgetTrial> candidates;
            for (int i = 0; i < grid.trials; ++i)
                if (!trials[i].failed) candidates.push_back({i, trials[i].val_mse, trials[i].selected});
            if (candidates.empty())
                throw std::runtime_error("grid cell " + cell.name() + ", repetition " +
                                         std::to_string(rep) + ": every tuning trial failed");
            try {
                rr.best_trial = select_within_budget(candidates, grid.feature_budget.value_or(cell.p),
                                                     /*higher_is_better=*/false)
                                    .id;
            } catch (const std::exception& e) {
                throw std::runtime_error("grid cell " + cell.name() + ", repetition " +
                                         std::to_string(rep) + ": " + e.what());
            }
            rr.best_config = trials[rr.best_trial].config;
            rr.best_val_mse = trials[rr.best_trial].val_mse;

            // retrain the winner (same seed reproduces the tuned model) and
            // score it on this repetition's test rows
            try {
                auto [model, report] = train(x_train, y_train, rr.best_config.model, rr.best_config.train);
                const EvalReport eval = evaluate(model, ds, ds.test_idx, &support);
                rr.test_mse = *eval.mse;
                rr.f1 = *eval.support_f1;
                rr.selected = eval.selected_features;
            } catch (const TrainAbort& e) {
                throw std::runtime_error("grid cell " + cell.name() + ", repetition " +
                                         std::to_string(rep) + ": " + e.what());
            }
            result.reps.push_back(rr);
            result.rep_test_mse.push_back(rr.test_mse);
            result.rep_f1.push_back(rr.f1);
            result.rep_selected.push_back(rr.selected);
            if (progress)
                *progress << "[" << cell.name() << "] rep " << (rep + 1) << ": val_mse "
                          << rr.best_val_mse << ", test_mse " << rr.test_mse << ", features "
                          << rr.selected << ", f1 " << rr.f1 << "\n";
        }

        std::vector<double> feats(result.rep_selected.begin(), result.rep_selected.end());
        std::tie(result.test_mse_mean, result.test_mse_se) = detail::mean_and_stderr(result.rep_test_mse);
        std::tie(result.f1_mean, result.f1_se) = detail::mean_and_stderr(result.rep_f1);
        std::tie(result.features_mean, result.features_se) = detail::mean_and_stderr(feats);
        results.push_back(std::move(result));
    }
    return results;
}

inline void write_grid_csv(const std::vector<CellResult>& results, std::ostream& out) {
    out << "sigma,p,n,k,test_mse_mean,test_mse_se,features_mean,features_se,f1_mean,f1_se,"
           "repetitions,trials_per_rep\n";
    for (const auto& r : results) {
        out << r.cell.sigma << "," << r.cell.p << "," << r.cell.n << "," << r.cell.k << ","
            << r.test_mse_mean << "," << r.test_mse_se << "," << r.features_mean << ","
            << r.features_se << "," << r.f1_mean << "," << r.f1_se << "," << r.reps.size() << ","
            << r.trials_per_rep << "\n";
    }
}

inline nlohmann::json grid_results_to_json(const std::vector<CellResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json j;
        j["cell"] = {{"sigma", r.cell.sigma}, {"p", r.cell.p}, {"n", r.cell.n}, {"k", r.cell.k}};
        j["trials_per_rep"] = r.trials_per_rep;
        j["test_mse"] = {{"mean", r.test_mse_mean}, {"stderr", r.test_mse_se}, {"values", r.rep_test_mse}};
        j["f1"] = {{"mean", r.f1_mean}, {"stderr", r.f1_se}, {"values", r.rep_f1}};
        j["features"] = {{"mean", r.features_mean}, {"stderr", r.features_se}, {"values", r.rep_selected}};
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& rr : r.reps) {
            reps.push_back({{"best_trial", rr.best_trial},
                            {"best_val_mse", rr.best_val_mse},
                            {"test_mse", rr.test_mse},
                            {"f1", rr.f1},
                            {"selected", rr.selected},
                            {"config",
                             {{"trees", rr.best_config.model.num_trees},
                              {"depth", rr.best_config.model.depth},
                              {"batch", rr.best_config.train.batch_size},
                              {"epochs", rr.best_config.train.epochs},
                              {"temperature", rr.best_config.train.scheduler
                                                  ? rr.best_config.train.scheduler->temperature
                                                  : 0.0},
                              {"lambda2", rr.best_config.train.lambda2},
                              {"lr", rr.best_config.train.learning_rate}}}});
        }
        j["repetitions"] = std::move(reps);
        arr.push_back(std::move(j));
    }
    return arr;
}

// ---------------------------------------------------------------------------
// Dense-to-sparse ablation: fixed lambda0 tuning vs the DSL scheduler.
// ---------------------------------------------------------------------------

struct AblationConfig {
    int trials = 50;
    HyperRanges ranges;                  // shared structural/optimizer ranges
    double fixed_lambda0_min = 1e-3;     // fixed arm draws lambda0 log-uniformly
    double fixed_lambda0_max = 10.0;
    int threads = 0;
    std::uint64_t seed = 0;
};

struct ArmOutcome {
    int trial = -1;
    double val_metric = 0.0;
    double test_metric = 0.0;
    int selected = 0;
};

struct AblationRow {
    int budget = 0;
    std::optional<ArmOutcome> fixed;
    std::optional<ArmOutcome> dsl;
};

/// For each feature budget, the best validation metric among trials meeting
/// the budget, separately for the fixed-lambda0 arm and the DSL arm.
/// Budgets with no qualifying trial are recorded as missing.
inline std::vector<AblationRow> run_dsl_ablation(const Dataset& ds, const std::vector<int>& budgets,
                                                 const AblationConfig& cfg) {
    if (ds.train_idx.empty() || ds.val_idx.empty() || ds.test_idx.empty())
        throw std::invalid_argument("ablation: dataset must carry train/val/test splits");
    const bool classification = ds.task == TaskKind::classification;
    const Eigen::MatrixXd x_train = ds.x_rows(ds.train_idx);
    const Targets y_train = ds.targets_rows(ds.train_idx);
    const int n_train = static_cast<int>(ds.train_idx.size());

    struct ArmTrial {
        TrialConfig config;
        double val_metric = 0.0;
        double test_metric = 0.0;
        int selected = 0;
        bool failed = false;
    };
    std::vector<ArmTrial> arms[2];  // 0 = fixed, 1 = dsl
    for (auto& arm : arms) arm.resize(cfg.trials);

    auto run_arm = [&](int arm_id) {
        detail::parallel_for(cfg.trials, cfg.threads, [&](int i) {
            Rng rng(seed_mix(cfg.seed, 0xAB1AULL, static_cast<std::uint64_t>(arm_id),
                             static_cast<std::uint64_t>(i)));
            ArmTrial& t = arms[arm_id][i];
            t.config = draw_trial_config(rng, cfg.ranges, ds.features(), n_train);
            if (classification) {
                t.config.train.loss = LossKind::cross_entropy;
                t.config.model.num_outputs = ds.num_classes <= 2 ? 1 : ds.num_classes;
            }
            if (arm_id == 0) {
                t.config.train.scheduler.reset();
                t.config.train.lambda0 = rng.log_uniform(cfg.fixed_lambda0_min, cfg.fixed_lambda0_max);
            }
            t.config.train.seed = seed_mix(cfg.seed, 0xF00DULL, static_cast<std::uint64_t>(arm_id),
                                           static_cast<std::uint64_t>(i));
            try {
                auto [model, report] = train(x_train, y_train, t.config.model, t.config.train);
                const EvalReport val = evaluate(model, ds, ds.val_idx);
                const EvalReport test = evaluate(model, ds, ds.test_idx);
                t.selected = val.selected_features;
                t.val_metric = classification ? *val.auc : *val.mse;
                t.test_metric = classification ? *test.auc : *test.mse;
                if (!std::isfinite(t.val_metric)) t.failed = true;
            } catch (const TrainAbort&) {
                t.failed = true;
            } catch (const std::invalid_argument&) {
                t.failed = true;  // e.g. single-class validation AUC
            }
        });
    };
    run_arm(0);
    run_arm(1);

    std::vector<AblationRow> rows;
    for (int budget : budgets) {
        AblationRow row;
        row.budget = budget;
        for (int arm_id = 0; arm_id < 2; ++arm_id) {
            std::vector<BudgetTrial> candidates;
            for (int i = 0; i < cfg.trials; ++i) {
                const ArmTrial& t = arms[arm_id][i];
                if (t.failed) continue;
                candidates.push_back({i, t.val_metric, t.selected});
            }
            try {
                const BudgetTrial best = select_within_budget(candidates, budget, classification);
                ArmOutcome outcome;
                outcome.trial = best.id;
                outcome.val_metric = best.metric;
                outcome.test_metric = arms[arm_id][best.id].test_metric;
                outcome.selected = best.selected;
                (arm_id == 0 ? row.fixed : row.dsl) = outcome;
            } catch (const std::exception&) {
                // budget unattainable for this arm: leave missing
            }
        }
        rows.push_back(row);
    }
    return rows;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    auto arm_json = [](const std::optional<ArmOutcome>& a) -> nlohmann::json {
        if (!a) return nullptr;
        return {{"trial", a->trial},
                {"val_metric", a->val_metric},
                {"test_metric", a->test_metric},
                {"selected", a->selected}};
    };
    for (const auto& r : rows)
        arr.push_back({{"budget", r.budget}, {"fixed", arm_json(r.fixed)}, {"dsl", arm_json(r.dsl)}});
    return arr;
}

// ---------------------------------------------------------------------------
// Trajectories (validation loss / sparsity during training)
// ---------------------------------------------------------------------------

struct TrajectoryPoint {
    int epoch = 0;
    double val_loss = 0.0;
    int selected = 0;
    double lambda0 = 0.0;
};

inline std::vector<TrajectoryPoint> record_trajectory(const TrainReport& report) {
    std::vector<TrajectoryPoint> series;
    series.reserve(report.epochs.size());
    for (const auto& e : report.epochs)
        series.push_back({e.epoch, e.val_loss, e.selected, e.lambda0});
    return series;
}

inline void trajectory_to_jsonl(const std::vector<TrajectoryPoint>& series, std::ostream& out) {
    for (const auto& pt : series) {
        nlohmann::json j{{"epoch", pt.epoch}, {"selected", pt.selected}, {"lambda0", pt.lambda0}};
        if (std::isfinite(pt.val_loss)) j["val_loss"] = pt.val_loss;
        out << j.dump() << "\n";
    }
}

}  // namespace skinny
