// skinny: train and evaluate sparse soft tree ensembles.
//
// Subcommands: train, evaluate, simulate, gradcheck, certify-descent.
// Human-readable progress goes to stderr; machine-readable artifacts are
// written only under --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "skinny/data.hpp"
#include "skinny/experiments.hpp"
#include "skinny/gradients.hpp"
#include "skinny/metrics.hpp"
#include "skinny/optimizer.hpp"
#include "skinny/serialize.hpp"
#include "skinny/tree_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    // common
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out = ".";
    // data
    std::string csv;
    std::string target;
    std::vector<std::string> categorical;
    bool classification = false;
    std::string synthetic;
    // model
    int trees = 10;
    int depth = 3;
    double theta = 1.0;
    bool bias = false;
    std::string model_path;
    std::string stats_path;
    // optimizer
    std::string loss = "auto";  // ls | xent | auto (from the task)
    double lr = 0.05;
    int batch = 32;
    int epochs = 100;
    double lambda2 = 0.0;
    std::optional<double> lambda0;
    std::optional<double> lambda1;
    std::optional<double> dsl_gamma;
    double dsl_temp = 0.01;
    std::optional<double> leaf_bound;
    // simulate
    std::string cells = "0.5:256:1000:8";
    int trials = 100;
    int reps = 5;
    int threads = 0;
    double noise = 0.5;
    int ntest = 10000;
    std::optional<int> budget;
    // gradcheck / certify-descent
    int instances = 200;
    double tolerance = 1e-5;
    double fd_step = 1e-5;
    int steps = 500;
    int max_halvings = 20;
    // extra train outputs
    bool export_csv = false;
    bool model_json = false;
};

/// Resolved configuration as actually run; written next to the artifacts so
/// every run is reproducible from its recording.
json flags_to_json(const Flags& f, const std::string& subcommand) {
    json j{{"subcommand", subcommand},
           {"seed", f.seed},
           {"out", f.out},
           {"csv", f.csv},
           {"target", f.target},
           {"categorical", f.categorical},
           {"classification", f.classification},
           {"synthetic", f.synthetic},
           {"trees", f.trees},
           {"depth", f.depth},
           {"theta", f.theta},
           {"bias", f.bias},
           {"loss", f.loss},
           {"lr", f.lr},
           {"batch", f.batch},
           {"epochs", f.epochs},
           {"lambda2", f.lambda2},
           {"dsl-temp", f.dsl_temp},
           {"cells", f.cells},
           {"trials", f.trials},
           {"reps", f.reps},
           {"threads", f.threads},
           {"noise", f.noise},
           {"ntest", f.ntest},
           {"instances", f.instances},
           {"tolerance", f.tolerance},
           {"fd-step", f.fd_step},
           {"steps", f.steps},
           {"max-halvings", f.max_halvings},
           {"export-csv", f.export_csv},
           {"model-json", f.model_json}};
    if (!f.model_path.empty()) j["model"] = f.model_path;
    if (!f.stats_path.empty()) j["stats"] = f.stats_path;
    if (f.lambda0) j["lambda0"] = *f.lambda0;
    if (f.lambda1) j["lambda1"] = *f.lambda1;
    if (f.dsl_gamma) j["dsl-gamma"] = *f.dsl_gamma;
    if (f.leaf_bound) j["leaf-bound"] = *f.leaf_bound;
    if (f.budget) j["budget"] = *f.budget;
    return j;
}

// Config-file keys mirror the long flag names one-to-one; explicit flags win.
void apply_config_file(Flags& f, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j = json::parse(in);
    if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") f.seed = value.get<std::uint64_t>();
        else if (key == "out") f.out = value.get<std::string>();
        else if (key == "csv") f.csv = value.get<std::string>();
        else if (key == "target") f.target = value.get<std::string>();
        else if (key == "categorical") f.categorical = value.get<std::vector<std::string>>();
        else if (key == "classification") f.classification = value.get<bool>();
        else if (key == "synthetic") f.synthetic = value.get<std::string>();
        else if (key == "trees") f.trees = value.get<int>();
        else if (key == "depth") f.depth = value.get<int>();
        else if (key == "theta") f.theta = value.get<double>();
        else if (key == "bias") f.bias = value.get<bool>();
        else if (key == "model") f.model_path = value.get<std::string>();
        else if (key == "stats") f.stats_path = value.get<std::string>();
        else if (key == "loss") f.loss = value.get<std::string>();
        else if (key == "lr") f.lr = value.get<double>();
        else if (key == "batch") f.batch = value.get<int>();
        else if (key == "epochs") f.epochs = value.get<int>();
        else if (key == "lambda2") f.lambda2 = value.get<double>();
        else if (key == "lambda0") f.lambda0 = value.get<double>();
        else if (key == "lambda1") f.lambda1 = value.get<double>();
        else if (key == "dsl-gamma") f.dsl_gamma = value.get<double>();
        else if (key == "dsl-temp") f.dsl_temp = value.get<double>();
        else if (key == "leaf-bound") f.leaf_bound = value.get<double>();
        else if (key == "cells") f.cells = value.get<std::string>();
        else if (key == "trials") f.trials = value.get<int>();
        else if (key == "reps") f.reps = value.get<int>();
        else if (key == "threads") f.threads = value.get<int>();
        else if (key == "noise") f.noise = value.get<double>();
        else if (key == "ntest") f.ntest = value.get<int>();
        else if (key == "budget") f.budget = value.get<int>();
        else if (key == "instances") f.instances = value.get<int>();
        else if (key == "tolerance") f.tolerance = value.get<double>();
        else if (key == "fd-step") f.fd_step = value.get<double>();
        else if (key == "steps") f.steps = value.get<int>();
        else if (key == "max-halvings") f.max_halvings = value.get<int>();
        else if (key == "export-csv") f.export_csv = value.get<bool>();
        else if (key == "model-json") f.model_json = value.get<bool>();
        else throw std::runtime_error("config file: unknown key '" + key + "'");
    }
}

skinny::SyntheticSpec parse_synthetic(const std::string& s, std::uint64_t seed, double noise,
                                      int ntest) {
    skinny::SyntheticSpec spec;
    spec.noise_std = noise;
    spec.n_test = ntest;
    spec.seed = seed;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("bad --synthetic entry '" + part + "' (want key=value)");
        const std::string key = part.substr(0, eq);
        const std::string value = part.substr(eq + 1);
        if (key == "sigma") spec.correlation = std::stod(value);
        else if (key == "p") spec.n_features = std::stoi(value);
        else if (key == "n") spec.n_samples = std::stoi(value);
        else if (key == "k") spec.true_support_size = std::stoi(value);
        else if (key == "noise") spec.noise_std = std::stod(value);
        else if (key == "ntest") spec.n_test = std::stoi(value);
        else throw std::runtime_error("bad --synthetic key '" + key + "'");
    }
    return spec;
}

struct LoadedData {
    skinny::Dataset ds;
    std::optional<skinny::TrueSupport> truth;
};

LoadedData load_data(const Flags& f, bool normalize_csv = true) {
    if (!f.synthetic.empty() && !f.csv.empty())
        throw std::runtime_error("pass either --csv or --synthetic, not both");
    LoadedData out;
    if (!f.synthetic.empty()) {
        auto [ds, truth] = skinny::generate_synthetic(
            parse_synthetic(f.synthetic, f.seed, f.noise, f.ntest));
        out.ds = std::move(ds);
        out.truth = std::move(truth);
    } else if (!f.csv.empty()) {
        if (f.target.empty()) throw std::runtime_error("--csv requires --target");
        skinny::CsvSchema schema;
        schema.categorical.insert(f.categorical.begin(), f.categorical.end());
        schema.target_is_label = f.classification;
        out.ds = skinny::load_csv(f.csv, f.target, schema);
        skinny::split(out.ds, 0.64, 0.16, 0.20, f.seed);
        if (normalize_csv) skinny::znormalize(out.ds);
    } else {
        throw std::runtime_error("no data: pass --csv PATH --target NAME or --synthetic SPEC");
    }
    return out;
}

skinny::LossKind resolve_loss(const Flags& f, const skinny::Dataset& ds) {
    if (f.loss == "ls") return skinny::LossKind::least_squares;
    if (f.loss == "xent") return skinny::LossKind::cross_entropy;
    if (f.loss == "auto")
        return ds.task == skinny::TaskKind::classification ? skinny::LossKind::cross_entropy
                                                           : skinny::LossKind::least_squares;
    throw std::runtime_error("--loss must be ls or xent");
}

skinny::TrainConfig make_train_config(const Flags& f, skinny::LossKind loss) {
    skinny::TrainConfig cfg;
    cfg.learning_rate = f.lr;
    cfg.batch_size = f.batch;
    cfg.epochs = f.epochs;
    cfg.lambda2 = f.lambda2;
    cfg.seed = f.seed;
    cfg.loss = loss;
    cfg.leaf_projection_bound = f.leaf_bound;
    const int sparsity_modes = (f.lambda0 ? 1 : 0) + (f.lambda1 ? 1 : 0) + (f.dsl_gamma ? 1 : 0);
    if (sparsity_modes > 1)
        throw std::runtime_error("pass at most one of --lambda0, --lambda1, --dsl-gamma");
    if (f.lambda1) {
        cfg.penalty = skinny::PenaltyMode::group_lasso;
        cfg.lambda1 = *f.lambda1;
    } else if (f.dsl_gamma) {
        cfg.penalty = skinny::PenaltyMode::group_l0_l2;
        cfg.scheduler = skinny::SchedulerConfig{*f.dsl_gamma, f.dsl_temp};
    } else if (f.lambda0) {
        cfg.penalty = skinny::PenaltyMode::group_l0_l2;
        cfg.lambda0 = *f.lambda0;
    } else {
        cfg.penalty = (f.lambda2 > 0) ? skinny::PenaltyMode::group_l0_l2 : skinny::PenaltyMode::none;
    }
    return cfg;
}

skinny::EnsembleConfig make_model_config(const Flags& f, const skinny::Dataset& ds,
                                         skinny::LossKind loss) {
    skinny::EnsembleConfig cfg;
    cfg.num_trees = f.trees;
    cfg.depth = f.depth;
    cfg.num_features = ds.features();
    cfg.activation_threshold = f.theta;
    cfg.use_bias = f.bias;
    if (ds.task == skinny::TaskKind::classification) {
        if (loss == skinny::LossKind::least_squares)
            throw std::runtime_error("least-squares loss needs a regression target");
        cfg.num_outputs = ds.num_classes <= 2 ? 1 : ds.num_classes;
    } else {
        cfg.num_outputs = 1;
    }
    return cfg;
}

fs::path ensure_out_dir(const Flags& f) {
    fs::path dir(f.out);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

int cmd_train(const Flags& f) {
    LoadedData data = load_data(f);
    const skinny::LossKind loss = resolve_loss(f, data.ds);
    const skinny::EnsembleConfig model_cfg = make_model_config(f, data.ds, loss);
    const skinny::TrainConfig train_cfg = make_train_config(f, loss);

    const Eigen::MatrixXd x_train = data.ds.x_rows(data.ds.train_idx);
    const skinny::Targets y_train = data.ds.targets_rows(data.ds.train_idx);
    const Eigen::MatrixXd x_val = data.ds.x_rows(data.ds.val_idx);
    const skinny::Targets y_val = data.ds.targets_rows(data.ds.val_idx);
    skinny::EvalSet val{&x_val, &y_val};

    std::cerr << "training: n=" << x_train.rows() << " p=" << x_train.cols()
              << " trees=" << model_cfg.num_trees << " depth=" << model_cfg.depth
              << " epochs=" << train_cfg.epochs << "\n";
    auto [model, report] = skinny::train(x_train, y_train, model_cfg, train_cfg, &val);

    const fs::path dir = ensure_out_dir(f);
    write_json(dir / "run_config.json", flags_to_json(f, "train"));
    skinny::save_model(model, (dir / "model.skny").string());
    if (f.model_json) write_json(dir / "model.json", skinny::model_to_json(model));
    if (f.export_csv) {
        std::ofstream csv(dir / "data.csv");
        skinny::write_csv(data.ds, csv);
    }
    {
        std::ofstream jsonl(dir / "report.jsonl");
        skinny::train_report_to_jsonl(report, jsonl);
    }
    json eval_out;
    const skinny::TrueSupport* truth = data.truth ? &*data.truth : nullptr;
    eval_out["validation"] =
        skinny::eval_report_to_json(skinny::evaluate(model, data.ds, data.ds.val_idx, truth));
    if (!data.ds.test_idx.empty())
        eval_out["test"] =
            skinny::eval_report_to_json(skinny::evaluate(model, data.ds, data.ds.test_idx, truth));
    write_json(dir / "eval.json", eval_out);
    write_json(dir / "data_sidecar.json", skinny::dataset_sidecar_json(data.ds, truth));

    std::cerr << "selected " << skinny::selected_count(model) << "/" << data.ds.features()
              << " features; artifacts in " << dir.string() << "\n";
    return 0;
}

int cmd_evaluate(const Flags& f) {
    if (f.model_path.empty()) throw std::runtime_error("evaluate requires --model");
    const skinny::EnsembleModel model = skinny::load_model(f.model_path);
    LoadedData data = load_data(f, /*normalize_csv=*/false);
    if (!f.csv.empty()) {
        if (!f.stats_path.empty()) {
            std::ifstream in(f.stats_path);
            if (!in) throw std::runtime_error("cannot open stats file: " + f.stats_path);
            json j = json::parse(in);
            const auto means = j.at("feature_means").get<std::vector<double>>();
            const auto stds = j.at("feature_stds").get<std::vector<double>>();
            if (static_cast<int>(means.size()) != data.ds.features())
                throw std::runtime_error("stats file feature count mismatch");
            for (int k = 0; k < data.ds.features(); ++k)
                data.ds.X.col(k) = (data.ds.X.col(k).array() - means[k]) / stds[k];
        }
        // evaluate over every row of an ingested file
        data.ds.test_idx.resize(data.ds.rows());
        for (int i = 0; i < data.ds.rows(); ++i) data.ds.test_idx[i] = i;
    }
    if (data.ds.features() != model.config.num_features)
        throw std::runtime_error("model expects p=" + std::to_string(model.config.num_features) +
                                 " features but data has p=" + std::to_string(data.ds.features()));

    const skinny::TrueSupport* truth = data.truth ? &*data.truth : nullptr;
    const skinny::EvalReport report = skinny::evaluate(model, data.ds, data.ds.test_idx, truth);
    const fs::path dir = ensure_out_dir(f);
    write_json(dir / "run_config.json", flags_to_json(f, "evaluate"));
    write_json(dir / "eval.json", skinny::eval_report_to_json(report));
    std::cerr << "evaluated " << data.ds.test_idx.size() << " rows; eval.json written\n";
    return 0;
}

std::vector<skinny::GridCell> parse_cells(const std::string& s) {
    std::vector<skinny::GridCell> cells;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ';')) {
        if (part.empty()) continue;
        skinny::GridCell cell;
        std::stringstream ps(part);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ps, tok, ':')) toks.push_back(tok);
        if (toks.size() < 3 || toks.size() > 4)
            throw std::runtime_error("bad cell '" + part + "' (want sigma:p:n[:k])");
        cell.sigma = std::stod(toks[0]);
        cell.p = std::stoi(toks[1]);
        cell.n = std::stoi(toks[2]);
        if (toks.size() == 4) cell.k = std::stoi(toks[3]);
        cells.push_back(cell);
    }
    if (cells.empty()) throw std::runtime_error("no cells given");
    return cells;
}

int cmd_simulate(const Flags& f) {
    skinny::ExperimentGrid grid;
    grid.cells = parse_cells(f.cells);
    grid.trials = f.trials;
    grid.repetitions = f.reps;
    grid.threads = f.threads;
    grid.noise_std = f.noise;
    grid.n_test = f.ntest;
    grid.seed = f.seed;
    grid.feature_budget = f.budget;
    const auto results = skinny::run_synthetic_grid(grid, &std::cerr);
    const fs::path dir = ensure_out_dir(f);
    write_json(dir / "run_config.json", flags_to_json(f, "simulate"));
    {
        std::ofstream csv(dir / "results.csv");
        skinny::write_grid_csv(results, csv);
    }
    write_json(dir / "results.json", skinny::grid_results_to_json(results));
    for (const auto& r : results)
        std::cerr << "[" << r.cell.name() << "] mse " << r.test_mse_mean << " +- " << r.test_mse_se
                  << ", features " << r.features_mean << ", f1 " << r.f1_mean << "\n";
    return 0;
}

int cmd_gradcheck(const Flags& f) {
    skinny::GradcheckOptions opt;
    opt.instances = f.instances;
    opt.seed = f.seed;
    opt.tolerance = f.tolerance;
    opt.fd_step = f.fd_step;
    Eigen::MatrixXd pool;
    if (!f.csv.empty()) {
        LoadedData data = load_data(f);
        pool = data.ds.X;
        opt.sample_pool = &pool;
    }
    const skinny::GradcheckReport report = skinny::run_gradcheck(opt);
    json j{{"instances", report.instances},
           {"tolerance", report.tolerance},
           {"max_rel_error_weights", report.max_rel_w},
           {"max_rel_error_leaves", report.max_rel_o},
           {"max_rel_error_biases", report.max_rel_b},
           {"pass", report.pass}};
    const fs::path dir = ensure_out_dir(f);
    write_json(dir / "run_config.json", flags_to_json(f, "gradcheck"));
    write_json(dir / "gradcheck.json", j);
    std::cerr << (report.pass ? "gradcheck PASS" : "gradcheck FAIL") << " (max rel "
              << report.max_rel() << ")\n";
    return report.pass ? 0 : 1;
}

int cmd_certify_descent(const Flags& f) {
    LoadedData data = load_data(f);
    if (data.ds.task != skinny::TaskKind::regression)
        throw std::runtime_error("certify-descent needs a regression target (least squares)");
    const std::vector<int>& rows = data.ds.train_idx;
    const Eigen::MatrixXd X = data.ds.x_rows(rows);
    const skinny::Targets y = data.ds.targets_rows(rows);

    Flags full = f;
    full.batch = static_cast<int>(X.rows());
    skinny::TrainConfig cfg = make_train_config(full, skinny::LossKind::least_squares);
    if (cfg.lambda2 <= 0) throw std::runtime_error("certify-descent requires --lambda2 > 0");
    skinny::EnsembleConfig model_cfg = make_model_config(full, data.ds, skinny::LossKind::least_squares);

    const skinny::DescentReport report =
        skinny::descent_certificate(X, y, model_cfg, cfg, f.steps, f.max_halvings);
    json j{{"ok", report.ok},
           {"eta_used", report.eta_used},
           {"halvings", report.halvings},
           {"violations", report.violations},
           {"first_violation_step", report.first_violation_step},
           {"max_w_norm", report.max_w_norm},
           {"w_norm_bound", report.w_norm_bound},
           {"initial_objective", report.initial_objective},
           {"final_objective", report.final_objective},
           {"steps", f.steps}};
    const fs::path dir = ensure_out_dir(f);
    write_json(dir / "run_config.json", flags_to_json(f, "certify-descent"));
    write_json(dir / "descent.json", j);
    std::cerr << (report.ok ? "descent certified" : "no workable step size found")
              << " (eta " << report.eta_used << ", halvings " << report.halvings << ")\n";
    return report.ok ? 0 : 1;
}

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; explicit flags win");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--out", f.out, "output directory");
}

void add_data_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--csv", f.csv, "CSV file (header row, comma separated)");
    cmd->add_option("--target", f.target, "target column name");
    cmd->add_option("--categorical", f.categorical, "categorical column names")->delimiter(',');
    cmd->add_flag("--classification", f.classification, "treat the target as class labels");
    cmd->add_option("--synthetic", f.synthetic,
                    "synthetic spec: sigma=...,p=...,n=...,k=...[,noise=...,ntest=...]");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--trees", f.trees, "ensemble size");
    cmd->add_option("--depth", f.depth, "tree depth");
    cmd->add_option("--theta", f.theta, "activation saturation threshold");
    cmd->add_flag("--bias", f.bias, "per-node bias terms");
}

void add_optimizer_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--loss", f.loss, "ls | xent (default: from the task)");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--batch", f.batch, "mini-batch size");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--lambda2", f.lambda2, "ridge strength");
    cmd->add_option("--lambda0", [&f](const CLI::results_t& r) {
        f.lambda0 = std::stod(r[0]); return true; }, "fixed group-l0 strength");
    cmd->add_option("--lambda1", [&f](const CLI::results_t& r) {
        f.lambda1 = std::stod(r[0]); return true; }, "group-lasso strength");
    cmd->add_option("--dsl-gamma", [&f](const CLI::results_t& r) {
        f.dsl_gamma = std::stod(r[0]); return true; }, "dense-to-sparse terminal penalty");
    cmd->add_option("--dsl-temp", f.dsl_temp, "dense-to-sparse ramp rate");
    cmd->add_option("--leaf-bound", [&f](const CLI::results_t& r) {
        f.leaf_bound = std::stod(r[0]); return true; }, "leaf-norm projection radius");
}

}  // namespace

int main(int argc, char** argv) {
    Flags f;
    // the config file seeds the defaults, so explicit flags always win
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        try {
            if (arg == "--config" && i + 1 < argc) apply_config_file(f, argv[i + 1]);
            else if (arg.rfind("--config=", 0) == 0) apply_config_file(f, arg.substr(9));
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }

    CLI::App app{"sparse soft tree ensembles with embedded feature selection"};
    app.require_subcommand(1);

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common_flags(train, f);
    add_data_flags(train, f);
    add_model_flags(train, f);
    add_optimizer_flags(train, f);
    train->add_flag("--export-csv", f.export_csv, "also write the ingested/generated data as CSV");
    train->add_flag("--model-json", f.model_json, "also write a JSON export of the model");

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a saved model");
    add_common_flags(evaluate, f);
    add_data_flags(evaluate, f);
    evaluate->add_option("--model", f.model_path, "model file (.skny)");
    evaluate->add_option("--stats", f.stats_path, "normalization sidecar from training");

    CLI::App* simulate = app.add_subcommand("simulate", "synthetic recovery grid");
    add_common_flags(simulate, f);
    simulate->add_option("--cells", f.cells, "grid cells sigma:p:n[:k], ';'-separated");
    simulate->add_option("--trials", f.trials, "random-search trials per cell");
    simulate->add_option("--reps", f.reps, "repetitions at the winning config");
    simulate->add_option("--threads", f.threads, "worker threads (0 = all)");
    simulate->add_option("--noise", f.noise, "response noise std");
    simulate->add_option("--ntest", f.ntest, "test rows per repetition");
    simulate->add_option("--budget", [&f](const CLI::results_t& r) {
        f.budget = std::stoi(r[0]); return true; }, "feature budget for trial selection");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common_flags(gradcheck, f);
    add_data_flags(gradcheck, f);
    gradcheck->add_option("--instances", f.instances, "random instances");
    gradcheck->add_option("--tolerance", f.tolerance, "max allowed relative error");
    gradcheck->add_option("--fd-step", f.fd_step, "central-difference step");

    CLI::App* certify = app.add_subcommand("certify-descent", "full-batch descent certificate");
    add_common_flags(certify, f);
    add_data_flags(certify, f);
    add_model_flags(certify, f);
    certify->add_option("--lr", f.lr, "initial learning rate (halved on violations)");
    certify->add_option("--lambda2", f.lambda2, "ridge strength (must be > 0)");
    certify->add_option("--lambda0", [&f](const CLI::results_t& r) {
        f.lambda0 = std::stod(r[0]); return true; }, "fixed group-l0 strength");
    certify->add_option("--steps", f.steps, "full-batch steps");
    certify->add_option("--max-halvings", f.max_halvings, "learning-rate halvings to try");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(f);
        if (evaluate->parsed()) return cmd_evaluate(f);
        if (simulate->parsed()) return cmd_simulate(f);
        if (gradcheck->parsed()) return cmd_gradcheck(f);
        if (certify->parsed()) return cmd_certify_descent(f);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
