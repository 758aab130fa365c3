#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "volreg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace volreg;

namespace {

PipelineConfig load_cfg(const std::string& path, bool seed_set, std::uint64_t seed) {
    PipelineConfig cfg = load_config(path);
    if (seed_set) cfg.seed = seed;
    return cfg;
}

LabeledDataset load_dir(const std::string& dir, const std::string& labels) {
    PipelineConfig c;
    c.data_dir = dir;
    c.labels_csv = labels.empty() ? (fs::path(dir) / "labels.csv").string() : labels;
    return load_directory_dataset(c);
}

void write_dataset(const LabeledDataset& ds, const fs::path& out) {
    fs::create_directories(out);
    std::vector<std::pair<std::string, TargetPair>> rows;
    for (const auto& [v, t] : ds.items) {
        write_volume(v, out / v.id);
        rows.push_back({v.id, t});
    }
    write_labels(out / "labels.csv", rows);
}

void write_features_csv(const fs::path& path, const FeatureMatrix& fm,
                        const std::vector<std::string>& ids, const std::string& hash) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "# config_hash=" << hash << "\n";
    f << "id";
    for (std::size_t j = 0; j < fm.cols; ++j) f << ",f" << j;
    f << ",pt500,pt4000\n";
    f.precision(10);
    for (std::size_t i = 0; i < fm.rows; ++i) {
        f << ids[i];
        for (std::size_t j = 0; j < fm.cols; ++j) f << "," << fm.values(i, j);
        f << "," << fm.targets(i, std::size_t{0}) << "," << fm.targets(i, std::size_t{1}) << "\n";
    }
}

struct FeatureFile {
    FeatureMatrix fm;
    std::vector<std::string> ids;
    std::string hash;
};

FeatureFile read_features_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line.rfind("# config_hash=", 0) != 0)
        throw FormatError("features file missing config_hash line: " + path.string());
    FeatureFile out;
    out.hash = line.substr(std::string("# config_hash=").size());
    if (!std::getline(f, line)) throw FormatError("features file missing header");

    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        out.ids.push_back(cell);
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() < 3) throw FormatError("bad features row '" + line + "'");
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw FormatError("features file has no rows");
    const std::size_t cols = rows[0].size() - 2;
    out.fm.rows = rows.size();
    out.fm.cols = cols;
    out.fm.values = Tensor<double>(Shape{rows.size(), cols});
    out.fm.targets = Tensor<double>(Shape{rows.size(), std::size_t{2}});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols + 2) throw FormatError("ragged features file");
        for (std::size_t j = 0; j < cols; ++j) out.fm.values(i, j) = rows[i][j];
        out.fm.targets(i, std::size_t{0}) = rows[i][cols];
        out.fm.targets(i, std::size_t{1}) = rows[i][cols + 1];
    }
    return out;
}

std::string artifact_hash(const fs::path& manifest) {
    std::ifstream f(manifest);
    if (!f) throw IoError("cannot open " + manifest.string());
    nlohmann::json j = nlohmann::json::parse(f);
    if (j.contains("config_hash")) return j.at("config_hash").get<std::string>();
    if (j.contains("run") && j.at("run").contains("config_hash"))
        return j.at("run").at("config_hash").get<std::string>();
    throw FormatError("no config_hash in " + manifest.string());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase volumetric regression pipeline: conv autoencoder features, tree/MLP threshold prediction"};
    app.require_subcommand(1);

    std::string config_path, in_dir, out_path, data_dir, labels_path, model_base, features_path,
        models_dir, metrics_path, csv_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    const auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) { seed_set = true; });
    };

    auto* run = app.add_subcommand("run", "execute the full pipeline");
    run->add_option("--config", config_path, "pipeline config JSON")->required();
    add_seed(run);

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic volume corpus");
    gen->add_option("--config", config_path)->required();
    gen->add_option("--out", out_path, "output volume directory")->required();
    add_seed(gen);

    auto* aug = app.add_subcommand("augment", "write augmented copies of a volume directory");
    aug->add_option("--config", config_path)->required();
    aug->add_option("--in", in_dir, "input volume directory")->required();
    aug->add_option("--out", out_path, "output volume directory")->required();
    add_seed(aug);

    auto* p1 = app.add_subcommand("train-phase1", "train the autoencoder on a volume directory");
    p1->add_option("--config", config_path)->required();
    p1->add_option("--data", data_dir, "training volume directory")->required();
    p1->add_option("--out", out_path, "output directory")->required();
    add_seed(p1);

    auto* enc = app.add_subcommand("encode", "extract latent features for a volume directory");
    enc->add_option("--config", config_path)->required();
    enc->add_option("--model", model_base, "phase-1 checkpoint base path (no extension)")->required();
    enc->add_option("--data", data_dir)->required();
    enc->add_option("--out", out_path, "features CSV path")->required();

    auto* p2 = app.add_subcommand("train-phase2", "fit forest/gbt/mnn on a features file");
    p2->add_option("--config", config_path)->required();
    p2->add_option("--features", features_path)->required();
    p2->add_option("--out", out_path, "output model directory")->required();
    add_seed(p2);

    auto* ev = app.add_subcommand("evaluate", "score saved phase-2 models on a features file");
    ev->add_option("--config", config_path)->required();
    ev->add_option("--models", models_dir, "phase-2 model directory")->required();
    ev->add_option("--features", features_path)->required();
    ev->add_option("--out", out_path, "metrics JSON path")->required();

    auto* rep = app.add_subcommand("report", "render a metrics file as a table");
    rep->add_option("--metrics", metrics_path)->required();
    rep->add_option("--csv", csv_path, "also write CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, seed_set, seed);
            const auto result = run_pipeline(cfg);
            std::cout << emit_table(result.report);
            std::cout << "outputs written to " << cfg.output_dir << "\n";
        } else if (gen->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, seed_set, seed);
            Rng rng = Rng(cfg.seed).split(1);
            write_dataset(generate_dataset(cfg, rng), out_path);
            std::cout << "wrote " << cfg.synthetic_n << " volumes to " << out_path << "\n";
        } else if (aug->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, seed_set, seed);
            LabeledDataset ds = load_dir(in_dir, "");
            for (auto& [v, t] : ds.items) v = normalize_volume(v);
            Rng rng = Rng(cfg.seed).split(3);
            LabeledDataset out = ds;
            const std::size_t added = augment_training_set(out, cfg.augment, rng);
            write_dataset(out, out_path);
            std::cout << "wrote " << out.items.size() << " volumes (" << added << " augmented) to "
                      << out_path << "\n";
        } else if (p1->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, seed_set, seed);
            LabeledDataset ds = load_dir(data_dir, "");
            for (auto& [v, t] : ds.items) v = normalize_volume(v);
            const Shape in_shape = ds.items.front().first.data.shape();
            Rng init_rng = Rng(cfg.seed).split(4);
            auto model = build_model<float>(cfg.phase1_kind, in_shape, cfg.latent_dim, init_rng,
                                            cfg.base_channels, cfg.beta);
            Rng train_rng = Rng(cfg.seed).split(5);
            const TrainReport tr = train(model, ds, cfg.phase1, train_rng);
            fs::create_directories(out_path);
            nlohmann::json run_info{{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
            save_model(model, fs::path(out_path) / "phase1_model", run_info);
            std::ofstream f(fs::path(out_path) / "loss_curve.csv");
            f << "epoch,total,reconstruction,kl\n";
            f.precision(10);
            for (std::size_t e = 0; e < tr.total_loss.size(); ++e)
                f << e << "," << tr.total_loss[e] << "," << tr.recon_loss[e] << "," << tr.kl_loss[e] << "\n";
            std::cout << "trained " << model_kind_name(cfg.phase1_kind) << ", final loss "
                      << (tr.total_loss.empty() ? 0.0 : tr.total_loss.back()) << "\n";
        } else if (enc->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, false, 0);
            auto model = load_model<float>(model_base);
            LabeledDataset ds = load_dir(data_dir, "");
            for (auto& [v, t] : ds.items) v = normalize_volume(v);
            FeatureMatrix fm = extract_features(model, ds);
            std::vector<std::string> ids;
            for (const auto& [v, t] : ds.items) ids.push_back(v.id);
            write_features_csv(out_path, fm, ids, artifact_hash(model_base + ".json"));
            std::cout << "wrote features for " << fm.rows << " volumes to " << out_path << "\n";
        } else if (p2->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, seed_set, seed);
            FeatureFile ff = read_features_csv(features_path);
            fs::create_directories(out_path);
            Rng forest_rng = Rng(cfg.seed).split(6);
            save_forest(fit_forest(ff.fm, cfg.forest, forest_rng), fs::path(out_path) / "forest.json");
            save_gbt(fit_gbt(ff.fm, cfg.gbt), fs::path(out_path) / "gbt.json");
            Rng mnn_rng = Rng(cfg.seed).split(7);
            MnnModel mnn = fit_mnn(ff.fm, cfg.mnn, mnn_rng);
            save_layers(fs::path(out_path) / "mnn.bin", mnn.layers);
            nlohmann::json mj{{"config_hash", ff.hash},
                              {"scaler_mean", mnn.scaler.mean},
                              {"scaler_std", mnn.scaler.std},
                              {"input_mean", mnn.in_scaler.mean},
                              {"input_std", mnn.in_scaler.std}};
            std::ofstream f(fs::path(out_path) / "mnn.json");
            f << mj.dump(2) << "\n";
            std::ofstream hf(fs::path(out_path) / "models.json");
            hf << nlohmann::json{{"config_hash", ff.hash}}.dump(2) << "\n";
            std::cout << "wrote phase-2 models to " << out_path << "\n";
        } else if (ev->parsed()) {
            PipelineConfig cfg = load_cfg(config_path, false, 0);
            FeatureFile ff = read_features_csv(features_path);
            const std::string mhash = artifact_hash(fs::path(models_dir) / "models.json");
            if (mhash != ff.hash)
                throw ParameterError("config hash mismatch: models " + mhash + " vs features " + ff.hash);

            MnnModel mnn;
            mnn.layers = load_layers<float>(fs::path(models_dir) / "mnn.bin");
            {
                std::ifstream f(fs::path(models_dir) / "mnn.json");
                nlohmann::json mj = nlohmann::json::parse(f);
                mnn.scaler.mean = mj.at("scaler_mean").get<std::array<double, 2>>();
                mnn.scaler.std = mj.at("scaler_std").get<std::array<double, 2>>();
                mnn.in_scaler.mean = mj.at("input_mean").get<std::vector<double>>();
                mnn.in_scaler.std = mj.at("input_std").get<std::vector<double>>();
            }
            const auto forest = load_forest(fs::path(models_dir) / "forest.json");
            const auto gbt = load_gbt(fs::path(models_dir) / "gbt.json");

            MetricsReport report;
            report.hash = ff.hash;
            report.seed = cfg.seed;
            report.n_test = ff.fm.rows;
            const auto score = [&](const std::string& name, const Tensor<double>& pred) {
                ModelMetrics m;
                m.name = name;
                std::tie(m.pt500_rmse, m.pt4000_rmse) = rmse(pred, ff.fm.targets);
                std::tie(m.pt500_mae, m.pt4000_mae) = mae(pred, ff.fm.targets);
                return m;
            };
            const auto pf = forest_predict(forest, ff.fm);
            const auto pg = gbt_predict(gbt, ff.fm);
            const auto pm = mnn_predict(mnn, ff.fm);
            report.models.push_back(score("random_forest", pf));
            report.models.push_back(score("gbt", pg));
            report.models.push_back(score("mnn", pm));
            report.models.push_back(score("ensemble_mnn_gbt", predict_ensemble(pm, pg)));
            report.baseline = score("mean_baseline", mean_baseline(ff.fm.targets, ff.fm.rows));
            std::ofstream f(out_path);
            f << metrics_to_json(report).dump(2) << "\n";
            std::cout << emit_table(report);
        } else if (rep->parsed()) {
            std::ifstream f(metrics_path);
            if (!f) throw IoError("cannot open " + metrics_path);
            const MetricsReport report = metrics_from_json(nlohmann::json::parse(f));
            std::cout << emit_table(report);
            if (!csv_path.empty()) {
                std::ofstream c(csv_path);
                c << emit_csv(report);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error [" << app.get_subcommands().front()->get_name() << "]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
