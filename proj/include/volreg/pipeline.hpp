#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "volreg/augment.hpp"
#include "volreg/latent.hpp"
#include "volreg/regress.hpp"
#include "volreg/volio.hpp"

namespace volreg {

// ---------------------------------------------------------------------------
// Config: one JSON document, every default overridable, seed mandatory for
// a run (no implicit randomness).
// ---------------------------------------------------------------------------

struct PipelineConfig {
    std::uint64_t seed = 0;

    // data
    std::string data_source = "synthetic";  // "synthetic" | "directory"
    std::size_t synthetic_n = 64;
    std::size_t volume_size = 32;
    std::string data_dir;
    std::string labels_csv;
    PhantomConfig phantom;

    AugmentConfig augment;

    // phase 1
    ModelKind phase1_kind = ModelKind::Ae;
    std::size_t latent_dim = 64;
    std::size_t base_channels = 8;
    double beta = 1e-3;
    TrainConfig phase1;

    // phase 2
    double test_fraction = 0.2;
    ForestParams forest;
    GbtParams gbt;
    MnnConfig mnn;

    std::string output_dir = "out";
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j) {
    PipelineConfig c;
    if (!j.contains("seed")) throw ParameterError("config must set 'seed'");
    c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::maybe(d, "source", c.data_source);
        detail::maybe(d, "n", c.synthetic_n);
        detail::maybe(d, "volume_size", c.volume_size);
        detail::maybe(d, "directory", c.data_dir);
        detail::maybe(d, "labels", c.labels_csv);
        detail::maybe(d, "phantom_t_min", c.phantom.t_min);
        detail::maybe(d, "phantom_t_max", c.phantom.t_max);
        detail::maybe(d, "phantom_noise_db", c.phantom.noise_db);
    }
    c.phantom.size = c.volume_size;
    if (c.data_source != "synthetic" && c.data_source != "directory")
        throw ParameterError("data.source must be 'synthetic' or 'directory'");

    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        detail::maybe(a, "noise_sigma_range", c.augment.noise_sigma_range);
        detail::maybe(a, "gamma_log_range", c.augment.gamma_log_range);
        detail::maybe(a, "blur_sigma_range", c.augment.blur_sigma_range);
        detail::maybe(a, "bias_order", c.augment.bias_order);
        detail::maybe(a, "bias_coeff_range", c.augment.bias_coeff_range);
        detail::maybe(a, "spike_count_range", c.augment.spike_count_range);
        detail::maybe(a, "spike_intensity_range", c.augment.spike_intensity_range);
        detail::maybe(a, "ghost_count_range", c.augment.ghost_count_range);
        detail::maybe(a, "ghost_intensity_range", c.augment.ghost_intensity_range);
        detail::maybe(a, "motion_rot_max_deg", c.augment.motion_rot_max_deg);
        detail::maybe(a, "motion_trans_max", c.augment.motion_trans_max);
        detail::maybe(a, "copies_per_volume", c.augment.copies_per_volume);
        detail::maybe(a, "apply_probability", c.augment.apply_probability);
    }
    c.augment.validate();

    if (j.contains("phase1")) {
        const auto& p = j.at("phase1");
        std::string kind = model_kind_name(c.phase1_kind);
        detail::maybe(p, "kind", kind);
        c.phase1_kind = model_kind_from_name(kind);
        detail::maybe(p, "latent_dim", c.latent_dim);
        detail::maybe(p, "base_channels", c.base_channels);
        detail::maybe(p, "beta", c.beta);
        detail::maybe(p, "epochs", c.phase1.epochs);
        detail::maybe(p, "batch_size", c.phase1.batch_size);
        detail::maybe(p, "lr", c.phase1.lr);
    }

    if (j.contains("phase2")) {
        const auto& p = j.at("phase2");
        detail::maybe(p, "test_fraction", c.test_fraction);
        if (p.contains("forest")) {
            const auto& f = p.at("forest");
            detail::maybe(f, "n_trees", c.forest.n_trees);
            detail::maybe(f, "max_depth", c.forest.tree.max_depth);
            detail::maybe(f, "min_leaf", c.forest.tree.min_leaf);
            detail::maybe(f, "feature_subsample", c.forest.tree.feature_subsample);
            detail::maybe(f, "n_threads", c.forest.n_threads);
        }
        if (p.contains("gbt")) {
            const auto& g = p.at("gbt");
            detail::maybe(g, "rounds", c.gbt.rounds);
            detail::maybe(g, "shrinkage", c.gbt.shrinkage);
            detail::maybe(g, "max_depth", c.gbt.max_depth);
            detail::maybe(g, "lambda", c.gbt.lambda);
            detail::maybe(g, "min_gain", c.gbt.min_gain);
        }
        if (p.contains("mnn")) {
            const auto& m = p.at("mnn");
            detail::maybe(m, "hidden", c.mnn.hidden);
            detail::maybe(m, "epochs", c.mnn.epochs);
            detail::maybe(m, "batch_size", c.mnn.batch_size);
            detail::maybe(m, "lr", c.mnn.lr);
        }
    }
    if (!(c.test_fraction > 0.0) || !(c.test_fraction < 1.0))
        throw ParameterError("phase2.test_fraction must be in (0,1)");

    detail::maybe(j, "output_dir", c.output_dir);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    return parse_config(nlohmann::json::parse(f));
}

/// Canonical fully-resolved form; its hash identifies the run.
inline nlohmann::json resolved_config(const PipelineConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["data"] = {{"source", c.data_source},      {"n", c.synthetic_n},
                 {"volume_size", c.volume_size}, {"directory", c.data_dir},
                 {"labels", c.labels_csv},       {"phantom_t_min", c.phantom.t_min},
                 {"phantom_t_max", c.phantom.t_max}, {"phantom_noise_db", c.phantom.noise_db}};
    j["augment"] = {{"noise_sigma_range", c.augment.noise_sigma_range},
                    {"gamma_log_range", c.augment.gamma_log_range},
                    {"blur_sigma_range", c.augment.blur_sigma_range},
                    {"bias_order", c.augment.bias_order},
                    {"bias_coeff_range", c.augment.bias_coeff_range},
                    {"spike_count_range", c.augment.spike_count_range},
                    {"spike_intensity_range", c.augment.spike_intensity_range},
                    {"ghost_count_range", c.augment.ghost_count_range},
                    {"ghost_intensity_range", c.augment.ghost_intensity_range},
                    {"motion_rot_max_deg", c.augment.motion_rot_max_deg},
                    {"motion_trans_max", c.augment.motion_trans_max},
                    {"copies_per_volume", c.augment.copies_per_volume},
                    {"apply_probability", c.augment.apply_probability}};
    j["phase1"] = {{"kind", model_kind_name(c.phase1_kind)}, {"latent_dim", c.latent_dim},
                   {"base_channels", c.base_channels},       {"beta", c.beta},
                   {"epochs", c.phase1.epochs},              {"batch_size", c.phase1.batch_size},
                   {"lr", c.phase1.lr}};
    j["phase2"] = {{"test_fraction", c.test_fraction},
                   {"forest",
                    {{"n_trees", c.forest.n_trees},
                     {"max_depth", c.forest.tree.max_depth},
                     {"min_leaf", c.forest.tree.min_leaf},
                     {"feature_subsample", c.forest.tree.feature_subsample},
                     {"n_threads", c.forest.n_threads}}},
                   {"gbt",
                    {{"rounds", c.gbt.rounds},
                     {"shrinkage", c.gbt.shrinkage},
                     {"max_depth", c.gbt.max_depth},
                     {"lambda", c.gbt.lambda},
                     {"min_gain", c.gbt.min_gain}}},
                   {"mnn",
                    {{"hidden", c.mnn.hidden},
                     {"epochs", c.mnn.epochs},
                     {"batch_size", c.mnn.batch_size},
                     {"lr", c.mnn.lr}}}};
    j["output_dir"] = c.output_dir;
    return j;
}

inline std::string config_hash(const PipelineConfig& c) {
    const std::string s = resolved_config(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ull;
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct ModelMetrics {
    std::string name;
    double pt500_rmse = 0.0;
    double pt4000_rmse = 0.0;
    double pt500_mae = 0.0;
    double pt4000_mae = 0.0;
};

struct MetricsReport {
    std::vector<ModelMetrics> models;  // forest, gbt, mnn, ensemble
    ModelMetrics baseline;             // training-mean predictor on the test set
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t n_augmented = 0;
    std::uint64_t seed = 0;
    std::string hash;
    std::map<std::string, double> timings;
};

inline nlohmann::json metrics_to_json(const MetricsReport& r, bool include_timings = true) {
    const auto row = [](const ModelMetrics& m) {
        return nlohmann::json{{"model", m.name},
                              {"pt500_rmse_db", m.pt500_rmse},
                              {"pt4000_rmse_db", m.pt4000_rmse},
                              {"pt500_mae_db", m.pt500_mae},
                              {"pt4000_mae_db", m.pt4000_mae}};
    };
    nlohmann::json j;
    j["config_hash"] = r.hash;
    j["seed"] = r.seed;
    j["n_train"] = r.n_train;
    j["n_test"] = r.n_test;
    j["n_augmented"] = r.n_augmented;
    j["baseline"] = row(r.baseline);
    j["models"] = nlohmann::json::array();
    for (const auto& m : r.models) j["models"].push_back(row(m));
    if (include_timings) {
        j["timings_s"] = r.timings;
    }
    return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    const auto row = [](const nlohmann::json& m) {
        ModelMetrics out;
        out.name = m.at("model").get<std::string>();
        out.pt500_rmse = m.at("pt500_rmse_db").get<double>();
        out.pt4000_rmse = m.at("pt4000_rmse_db").get<double>();
        out.pt500_mae = m.at("pt500_mae_db").get<double>();
        out.pt4000_mae = m.at("pt4000_mae_db").get<double>();
        return out;
    };
    MetricsReport r;
    r.hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_train = j.at("n_train").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    r.n_augmented = j.at("n_augmented").get<std::size_t>();
    r.baseline = row(j.at("baseline"));
    for (const auto& m : j.at("models")) r.models.push_back(row(m));
    if (j.contains("timings_s")) r.timings = j.at("timings_s").get<std::map<std::string, double>>();
    return r;
}

/// Fixed-width text table plus CSV, both 4-decimal.
inline std::string emit_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(26) << "Model" << std::right << std::setw(18) << "RMSE PT500 (dB)"
       << std::setw(18) << "RMSE PT4000 (dB)" << "\n";
    const auto line = [&](const ModelMetrics& m) {
        os << std::left << std::setw(26) << m.name << std::right << std::setw(18) << m.pt500_rmse
           << std::setw(18) << m.pt4000_rmse << "\n";
    };
    for (const auto& m : r.models) line(m);
    line(r.baseline);
    return os.str();
}

inline std::string emit_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "model,pt500_rmse_db,pt4000_rmse_db\n";
    for (const auto& m : r.models)
        os << m.name << "," << m.pt500_rmse << "," << m.pt4000_rmse << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Stages.
// ---------------------------------------------------------------------------

/// Synthetic corpus: per-item split streams, so parallel and serial
/// generation agree.
inline LabeledDataset generate_dataset(const PipelineConfig& c, Rng& rng) {
    LabeledDataset ds;
    ds.provenance = Provenance::Synthetic;
    PhantomConfig pc = c.phantom;
    pc.size = c.volume_size;
    for (std::size_t i = 0; i < c.synthetic_n; ++i) {
        Rng item = rng.split(i);
        Phantom p = make_phantom(item, pc);
        p.volume.id = "phantom_" + std::to_string(i);
        ds.items.push_back({std::move(p.volume), p.targets});
    }
    return ds;
}

inline LabeledDataset load_directory_dataset(const PipelineConfig& c) {
    const auto labels = read_labels(c.labels_csv);
    LabeledDataset ds;
    ds.provenance = Provenance::External;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(c.data_dir)) {
        const auto p = e.path();
        if (p.extension() == ".nii") files.push_back(p);
        else if (p.extension() == ".json" &&
                 std::filesystem::exists(p.parent_path() / (p.stem().string() + ".f32")))
            files.push_back(p.parent_path() / p.stem());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        Volume v = p.extension() == ".nii" ? read_nifti(p) : read_volume(p);
        const auto it = labels.find(v.id);
        if (it == labels.end()) throw ParameterError("no label row for volume id '" + v.id + "'");
        ds.items.push_back({std::move(v), it->second});
    }
    if (ds.items.empty()) throw ParameterError("no volumes found in " + c.data_dir);
    return ds;
}

/// Training-set augmentation, labels copied unchanged. Test data is never
/// augmented (it would corrupt RMSE comparability).
inline std::size_t augment_training_set(LabeledDataset& train, const AugmentConfig& cfg, Rng& rng) {
    if (cfg.copies_per_volume == 0) return 0;
    const std::size_t original = train.items.size();
    std::size_t added = 0;
    for (std::size_t i = 0; i < original; ++i) {
        Rng item = rng.split(i);
        auto copies = augment_volume(train.items[i].first, cfg, item);
        for (auto& cvol : copies) {
            train.items.push_back({std::move(cvol), train.items[i].second});
            ++added;
        }
    }
    return added;
}

template <typename T = float>
FeatureMatrix extract_features(EncoderDecoderModel<T>& model, const LabeledDataset& ds) {
    FeatureMatrix fm;
    fm.rows = ds.items.size();
    fm.cols = model.latent_dim;
    fm.values = Tensor<double>(Shape{fm.rows, fm.cols});
    fm.targets = Tensor<double>(Shape{fm.rows, 2});
    for (std::size_t i = 0; i < fm.rows; ++i) {
        const Tensor<T> z = encode(model, ds.items[i].first);
        for (std::size_t j = 0; j < fm.cols; ++j) fm.values(i, j) = static_cast<double>(z[j]);
        fm.targets(i, std::size_t{0}) = ds.items[i].second.pt500;
        fm.targets(i, std::size_t{1}) = ds.items[i].second.pt4000;
    }
    return fm;
}

struct PipelineResult {
    MetricsReport report;
    TrainReport phase1_report;
};

/// generate/load -> normalize -> split -> augment(train) -> phase-1 train
/// -> encode -> phase-2 fit -> evaluate. All randomness derives from
/// config.seed through named rng splits.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, bool write_outputs = true) {
    namespace fs = std::filesystem;
    const Rng root(cfg.seed);
    PipelineResult result;
    MetricsReport& report = result.report;
    report.seed = cfg.seed;
    report.hash = config_hash(cfg);

    const auto timed = [&](const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        report.timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    // data
    LabeledDataset ds;
    timed("data", [&] {
        Rng data_rng = root.split(1);
        ds = cfg.data_source == "synthetic" ? generate_dataset(cfg, data_rng)
                                            : load_directory_dataset(cfg);
        for (auto& [v, t] : ds.items) v = normalize_volume(v);
    });

    auto split = split_dataset(ds, cfg.test_fraction, root.split(2).state());
    LabeledDataset& train_set = split.first;
    LabeledDataset& test_set = split.second;
    report.n_test = test_set.items.size();

    timed("augment", [&] {
        Rng aug_rng = root.split(3);
        report.n_augmented = augment_training_set(train_set, cfg.augment, aug_rng);
    });
    report.n_train = train_set.items.size();

    // phase 1
    EncoderDecoderModel<float> model;
    timed("phase1", [&] {
        Rng init_rng = root.split(4);
        model = build_model<float>(cfg.phase1_kind, Shape{cfg.volume_size, cfg.volume_size, cfg.volume_size},
                                   cfg.latent_dim, init_rng, cfg.base_channels, cfg.beta);
        Rng train_rng = root.split(5);
        result.phase1_report = volreg::train(model, train_set, cfg.phase1, train_rng);
    });

    // encode
    FeatureMatrix ftrain, ftest;
    timed("encode", [&] {
        ftrain = extract_features(model, train_set);
        ftest = extract_features(model, test_set);
    });

    // phase 2
    ForestModel forest;
    BoostedModel gbt;
    MnnModel mnn;
    timed("phase2", [&] {
        Rng forest_rng = root.split(6);
        forest = fit_forest(ftrain, cfg.forest, forest_rng);
        gbt = fit_gbt(ftrain, cfg.gbt);
        Rng mnn_rng = root.split(7);
        mnn = fit_mnn(ftrain, cfg.mnn, mnn_rng);
    });

    // evaluate
    timed("evaluate", [&] {
        const auto score = [&](const std::string& name, const Tensor<double>& pred) {
            ModelMetrics m;
            m.name = name;
            std::tie(m.pt500_rmse, m.pt4000_rmse) = rmse(pred, ftest.targets);
            std::tie(m.pt500_mae, m.pt4000_mae) = mae(pred, ftest.targets);
            return m;
        };
        const auto pf = forest_predict(forest, ftest);
        const auto pg = gbt_predict(gbt, ftest);
        const auto pm = mnn_predict(mnn, ftest);
        report.models.push_back(score("random_forest", pf));
        report.models.push_back(score("gbt", pg));
        report.models.push_back(score("mnn", pm));
        report.models.push_back(score("ensemble_mnn_gbt", predict_ensemble(pm, pg)));
        report.baseline = score("mean_baseline", mean_baseline(ftrain.targets, ftest.rows));
    });

    if (write_outputs) {
        const fs::path out(cfg.output_dir);
        fs::create_directories(out);
        {
            std::ofstream f(out / "resolved_config.json");
            nlohmann::json rc = resolved_config(cfg);
            rc["config_hash"] = report.hash;
            f << rc.dump(2) << "\n";
        }
        {
            std::ofstream f(out / "metrics.json");
            f << metrics_to_json(report).dump(2) << "\n";
        }
        {
            std::ofstream f(out / "metrics.csv");
            f << emit_csv(report);
        }
        {
            std::ofstream f(out / "loss_curve.csv");
            f << "epoch,total,reconstruction,kl\n";
            f.precision(10);
            for (std::size_t e = 0; e < result.phase1_report.total_loss.size(); ++e)
                f << e << "," << result.phase1_report.total_loss[e] << ","
                  << result.phase1_report.recon_loss[e] << "," << result.phase1_report.kl_loss[e] << "\n";
        }
        nlohmann::json run_info{{"config_hash", report.hash}, {"seed", cfg.seed}};
        save_model(model, out / "phase1_model", run_info);
        save_forest(forest, out / "forest.json");
        save_gbt(gbt, out / "gbt.json");
        save_layers(out / "mnn.bin", mnn.layers);
        {
            nlohmann::json mj{{"config_hash", report.hash},
                              {"scaler_mean", mnn.scaler.mean},
                              {"scaler_std", mnn.scaler.std},
                              {"input_mean", mnn.in_scaler.mean},
                              {"input_std", mnn.in_scaler.std}};
            std::ofstream f(out / "mnn.json");
            f << mj.dump(2) << "\n";
        }
    }
    return result;
}

} // namespace volreg
