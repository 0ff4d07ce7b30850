#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "skinny/metrics.hpp"
#include "skinny/optimizer.hpp"
#include "skinny/tree_model.hpp"

namespace skinny {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; byte swapping is not implemented");

// .skny binary layout, version 1:
//   magic "SKNY", u32 version,
//   u32 m, u32 depth, u32 p, u32 c, f64 theta, u8 use_bias,
//   u32 n_selected, u32 selected_indices[n_selected] (ascending),
//   per selected feature: u32 index, f64 group[m*|I|] (rows j*|I|+i),
//   if use_bias: f64 biases[m*|I|],
//   f64 leaves[m*c*|L|] in (tree, output, leaf) order.

namespace detail {

constexpr std::uint32_t kSknyVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("model file truncated");
    return v;
}

}  // namespace detail

inline void save_model(const EnsembleModel& model, std::ostream& out) {
    const auto& cfg = model.config;
    out.write("SKNY", 4);
    detail::write_pod(out, detail::kSknyVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(cfg.num_trees));
    detail::write_pod(out, static_cast<std::uint32_t>(cfg.depth));
    detail::write_pod(out, static_cast<std::uint32_t>(cfg.num_features));
    detail::write_pod(out, static_cast<std::uint32_t>(cfg.num_outputs));
    detail::write_pod(out, cfg.activation_threshold);
    detail::write_pod(out, static_cast<std::uint8_t>(cfg.use_bias ? 1 : 0));

    const SupportMask mask = support_mask(model);
    const std::vector<int> idx = mask.indices();
    detail::write_pod(out, static_cast<std::uint32_t>(idx.size()));
    for (int k : idx) detail::write_pod(out, static_cast<std::uint32_t>(k));
    for (int k : idx) {
        detail::write_pod(out, static_cast<std::uint32_t>(k));
        out.write(reinterpret_cast<const char*>(model.weights.col(k).data()),
                  static_cast<std::streamsize>(sizeof(double) * model.weights.rows()));
    }
    if (cfg.use_bias)
        out.write(reinterpret_cast<const char*>(model.biases.data()),
                  static_cast<std::streamsize>(sizeof(double) * model.biases.size()));
    for (int j = 0; j < cfg.num_trees; ++j)
        for (int c = 0; c < cfg.num_outputs; ++c)
            for (int l = 0; l < cfg.leaves_per_tree(); ++l)
                detail::write_pod(out, model.leaves(c, model.leaf_col(j, l)));
    if (!out) throw std::runtime_error("model write failed");
}

inline void save_model(const EnsembleModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    save_model(model, out);
}

inline EnsembleModel load_model(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SKNY", 4) != 0)
        throw std::runtime_error("not a model file (bad magic)");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != detail::kSknyVersion)
        throw std::runtime_error("unsupported model version " + std::to_string(version));

    EnsembleConfig cfg;
    cfg.num_trees = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    cfg.depth = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    cfg.num_features = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    cfg.num_outputs = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    cfg.activation_threshold = detail::read_pod<double>(in);
    cfg.use_bias = detail::read_pod<std::uint8_t>(in) != 0;
    cfg.validate();

    EnsembleModel model = EnsembleModel::zeros(cfg);
    const auto n_selected = detail::read_pod<std::uint32_t>(in);
    if (n_selected > static_cast<std::uint32_t>(cfg.num_features))
        throw std::runtime_error("model file corrupt: support larger than p");
    std::vector<std::uint32_t> idx(n_selected);
    for (auto& k : idx) {
        k = detail::read_pod<std::uint32_t>(in);
        if (k >= static_cast<std::uint32_t>(cfg.num_features))
            throw std::runtime_error("model file corrupt: support index out of range");
    }
    for (std::uint32_t r = 0; r < n_selected; ++r) {
        const auto k = detail::read_pod<std::uint32_t>(in);
        if (k != idx[r]) throw std::runtime_error("model file corrupt: group index mismatch");
        in.read(reinterpret_cast<char*>(model.weights.col(k).data()),
                static_cast<std::streamsize>(sizeof(double) * model.weights.rows()));
        if (!in) throw std::runtime_error("model file truncated");
    }
    if (cfg.use_bias) {
        in.read(reinterpret_cast<char*>(model.biases.data()),
                static_cast<std::streamsize>(sizeof(double) * model.biases.size()));
        if (!in) throw std::runtime_error("model file truncated");
    }
    for (int j = 0; j < cfg.num_trees; ++j)
        for (int c = 0; c < cfg.num_outputs; ++c)
            for (int l = 0; l < cfg.leaves_per_tree(); ++l)
                model.leaves(c, model.leaf_col(j, l)) = detail::read_pod<double>(in);
    return model;
}

inline EnsembleModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    return load_model(in);
}

/// JSON mirror of the binary format, for debugging.
inline nlohmann::json model_to_json(const EnsembleModel& model) {
    const auto& cfg = model.config;
    nlohmann::json j;
    j["format"] = "skny";
    j["version"] = detail::kSknyVersion;
    j["config"] = {{"num_trees", cfg.num_trees},
                   {"depth", cfg.depth},
                   {"num_features", cfg.num_features},
                   {"num_outputs", cfg.num_outputs},
                   {"activation_threshold", cfg.activation_threshold},
                   {"use_bias", cfg.use_bias}};
    const SupportMask mask = support_mask(model);
    j["support"] = mask.indices();
    nlohmann::json groups = nlohmann::json::array();
    for (int k : mask.indices()) {
        nlohmann::json g;
        g["feature"] = k;
        g["weights"] = std::vector<double>(model.weights.col(k).data(),
                                           model.weights.col(k).data() + model.weights.rows());
        groups.push_back(std::move(g));
    }
    j["groups"] = std::move(groups);
    if (cfg.use_bias)
        j["biases"] = std::vector<double>(model.biases.data(), model.biases.data() + model.biases.size());
    std::vector<double> leaves;
    leaves.reserve(static_cast<std::size_t>(model.leaves.size()));
    for (int jt = 0; jt < cfg.num_trees; ++jt)
        for (int c = 0; c < cfg.num_outputs; ++c)
            for (int l = 0; l < cfg.leaves_per_tree(); ++l)
                leaves.push_back(model.leaves(c, model.leaf_col(jt, l)));
    j["leaves"] = std::move(leaves);
    return j;
}

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    if (report.mse) j["mse"] = *report.mse;
    if (report.auc) j["auc"] = *report.auc;
    j["selected_features"] = report.selected_features;
    if (report.support_f1) j["support_f1"] = *report.support_f1;
    j["compression_ratio"] = report.compression_ratio;
    j["sparse_parameters"] = report.sparse_parameters;
    return j;
}

/// One JSON record per epoch, then a final record with run totals.
inline void train_report_to_jsonl(const TrainReport& report, std::ostream& out) {
    for (const auto& e : report.epochs) {
        nlohmann::json j{{"epoch", e.epoch},
                         {"objective", e.objective},
                         {"data_loss", e.data_loss},
                         {"penalty", e.penalty_value},
                         {"selected", e.selected},
                         {"lambda0", e.lambda0}};
        if (std::isfinite(e.val_loss)) j["val_loss"] = e.val_loss;
        out << j.dump() << "\n";
    }
    out << nlohmann::json{{"final", true},
                          {"epochs_run", report.epochs_run},
                          {"wall_time_sec", report.wall_time_sec}}
               .dump()
        << "\n";
}

/// Sidecar with normalization statistics and (optionally) the generating
/// support, so downstream scoring is reproducible.
inline nlohmann::json dataset_sidecar_json(const Dataset& ds, const TrueSupport* truth = nullptr) {
    nlohmann::json j;
    j["features"] = ds.features();
    if (ds.feature_means.size() > 0) {
        j["feature_means"] = std::vector<double>(ds.feature_means.data(),
                                                 ds.feature_means.data() + ds.feature_means.size());
        j["feature_stds"] = std::vector<double>(ds.feature_stds.data(),
                                                ds.feature_stds.data() + ds.feature_stds.size());
    }
    if (!ds.feature_names.empty()) j["feature_names"] = ds.feature_names;
    if (truth) j["true_support"] = truth->indices;
    return j;
}

}  // namespace skinny
