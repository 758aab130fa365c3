#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "volreg/latent.hpp"

using namespace volreg;
namespace fs = std::filesystem;

namespace {

LabeledDataset small_phantoms(std::size_t n, std::size_t size, std::uint64_t seed) {
    LabeledDataset ds;
    Rng rng(seed);
    PhantomConfig cfg;
    cfg.size = size;
    for (std::size_t i = 0; i < n; ++i) {
        Rng item = rng.split(i);
        auto p = make_phantom(item, cfg);
        p.volume.id = "p" + std::to_string(i);
        ds.items.emplace_back(std::move(p.volume), p.targets);
    }
    return ds;
}

} // namespace

TEST_CASE("build_model validates extents and wires shapes") {
    Rng rng(1);
    CHECK_THROWS_AS(build_model<float>(ModelKind::Ae, Shape{12, 12, 12}, 8, rng), DimensionError);
    CHECK_THROWS_AS(build_model<float>(ModelKind::Ae, Shape{4, 4, 4}, 8, rng), DimensionError);
    CHECK_THROWS_AS(build_model<float>(ModelKind::Ae, Shape{8, 8}, 8, rng), DimensionError);

    auto m = build_model<float>(ModelKind::Ae, Shape{16, 16, 16}, 10, rng, 4);
    Volume v;
    v.data = Tensor<float>(Shape{16, 16, 16}, 0.3f);
    v.id = "x";
    auto z = encode(m, v);
    CHECK(z.shape() == Shape{10});
    auto [rec, mse] = reconstruct(m, v);
    CHECK(rec.data.shape() == v.data.shape());
    CHECK(mse >= 0.0);
    // final sigmoid keeps the reconstruction in (0,1)
    for (std::size_t i = 0; i < rec.data.size(); ++i) {
        CHECK(rec.data[i] > 0.0f);
        CHECK(rec.data[i] < 1.0f);
    }
}

TEST_CASE("vae has two dense heads sharing the conv trunk") {
    Rng rng(2);
    auto m = build_model<float>(ModelKind::Vae, Shape{8, 8, 8}, 6, rng, 2);
    CHECK(m.mu_head.weights.shape() == m.logvar_head.weights.shape());
    CHECK(m.mu_head.weights.shape()[0] == 6);
    Volume v;
    v.data = Tensor<float>(Shape{8, 8, 8}, 0.5f);
    CHECK(encode(m, v).shape() == Shape{6});

    Volume wrong;
    wrong.data = Tensor<float>(Shape{16, 16, 16});
    CHECK_THROWS_AS(encode(m, wrong), DimensionError);
}

TEST_CASE("reparameterize pins mean and noise") {
    LatentDistribution<double> d;
    d.mu = Tensor<double>::from({3}, {1, -2, 0.5});
    d.logvar = Tensor<double>(Shape{3});  // unit variance

    auto z0 = reparameterize(d, Tensor<double>(Shape{3}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(z0[i] == d.mu[i]);

    auto eps = Tensor<double>::from({3}, {0.3, -1.1, 2.0});
    auto z = reparameterize(d, eps);
    for (std::size_t i = 0; i < 3; ++i) CHECK(z[i] == doctest::Approx(d.mu[i] + eps[i]));

    d.logvar = Tensor<double>::from({3}, {2.0, 2.0, 2.0});
    auto zs = reparameterize(d, eps);
    const double s = std::exp(1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(zs[i] == doctest::Approx(d.mu[i] + s * eps[i]));
}

TEST_CASE("reparameterize sampling statistics") {
    LatentDistribution<double> d;
    d.mu = Tensor<double>::from({2}, {3.0, -1.0});
    d.logvar = Tensor<double>::from({2}, {std::log(4.0), 0.0});
    Rng rng(42);
    const int n = 20000;
    double mean[2] = {0, 0}, var[2] = {0, 0};
    std::vector<std::array<double, 2>> draws(n);
    for (int i = 0; i < n; ++i) {
        auto z = reparameterize(d, rng);
        draws[i] = {z[0], z[1]};
        mean[0] += z[0];
        mean[1] += z[1];
    }
    mean[0] /= n; mean[1] /= n;
    for (int i = 0; i < n; ++i) {
        var[0] += (draws[i][0] - mean[0]) * (draws[i][0] - mean[0]);
        var[1] += (draws[i][1] - mean[1]) * (draws[i][1] - mean[1]);
    }
    var[0] /= n; var[1] /= n;
    CHECK(mean[0] == doctest::Approx(3.0).epsilon(0.02));
    CHECK(mean[1] == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(var[0] == doctest::Approx(4.0).epsilon(0.05));
    CHECK(var[1] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("ae loss is pure reconstruction; vae adds weighted kl") {
    Rng rng(3);
    auto ae = build_model<double>(ModelKind::Ae, Shape{8, 8, 8}, 4, rng, 2);
    Volume v;
    v.data = Tensor<float>(Shape{8, 8, 8}, 0.4f);
    auto x = volume_as_input<double>(v);
    auto parts = model_item_loss(ae, x, static_cast<const Tensor<double>*>(nullptr), static_cast<ModelGrads<double>*>(nullptr));
    CHECK(parts.kl == 0.0);
    CHECK(parts.total == parts.recon);

    auto vae = build_model<double>(ModelKind::Vae, Shape{8, 8, 8}, 4, rng, 2, 0.1);
    auto eps = Tensor<double>(Shape{4});
    auto vp = model_item_loss(vae, x, &eps, static_cast<ModelGrads<double>*>(nullptr));
    CHECK(vp.kl >= 0.0);
    CHECK(vp.total == doctest::Approx(vp.recon + 0.1 * vp.kl));
    auto vp2 = model_item_loss(vae, x, &eps, static_cast<ModelGrads<double>*>(nullptr));
    CHECK(vp.total == vp2.total);  // pinned eps makes the loss deterministic
    CHECK_THROWS_AS(model_item_loss(vae, x, static_cast<const Tensor<double>*>(nullptr), static_cast<ModelGrads<double>*>(nullptr)),
                    ParameterError);

    auto beta0 = build_model<double>(ModelKind::Vae, Shape{8, 8, 8}, 4, rng, 2, 0.0);
    auto b0 = model_item_loss(beta0, x, &eps, static_cast<ModelGrads<double>*>(nullptr));
    CHECK(b0.total == b0.recon);
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
    Rng rng(4);
    Volume v;
    v.data = Tensor<float>(Shape{8, 8, 8});
    Rng vr(5);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = static_cast<float>(vr.uniform(0.1, 0.9));
    auto x = volume_as_input<double>(v);

    for (ModelKind kind : {ModelKind::Ae, ModelKind::Vae}) {
        auto m = build_model<double>(kind, Shape{8, 8, 8}, 4, rng, 2, 0.05);
        Tensor<double> eps(Shape{4});
        Rng er(6);
        for (std::size_t i = 0; i < 4; ++i) eps[i] = er.normal();
        const Tensor<double>* ep = kind == ModelKind::Vae ? &eps : nullptr;

        auto grads = ModelGrads<double>::shaped_like(m);
        grads.zero();
        model_item_loss(m, x, ep, &grads);
        auto flat = grads.flat(m);
        auto layer_ptrs = m.layers();

        const auto loss_at = [&] { return model_item_loss(m, x, ep, static_cast<ModelGrads<double>*>(nullptr)).total; };
        const double h = 1e-4;
        std::size_t checked = 0;
        Rng pick(7);
        for (std::size_t li = 0; li < layer_ptrs.size(); ++li) {
            if (!layer_ptrs[li]->has_params()) continue;
            Tensor<double>& w = layer_ptrs[li]->weights;
            for (int rep = 0; rep < 3; ++rep) {
                const std::size_t k = pick.below(w.size());
                const double orig = w[k];
                w[k] = orig + h;
                const double fp = loss_at();
                w[k] = orig - h;
                const double fm = loss_at();
                w[k] = orig;
                const double fd = (fp - fm) / (2 * h);
                const double got = (*flat[li].first)[k];
                const double scale = std::max({std::abs(fd), std::abs(got), 1e-8});
                CHECK(std::abs(fd - got) / scale < 1e-3);
                ++checked;
            }
            // one bias entry per layer too
            Tensor<double>& b = layer_ptrs[li]->bias;
            const std::size_t k = pick.below(b.size());
            const double orig = b[k];
            b[k] = orig + h;
            const double fp = loss_at();
            b[k] = orig - h;
            const double fm = loss_at();
            b[k] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double got = (*flat[li].second)[k];
            const double scale = std::max({std::abs(fd), std::abs(got), 1e-8});
            CHECK(std::abs(fd - got) / scale < 1e-3);
            ++checked;
        }
        CHECK(checked >= 20);
    }
}

TEST_CASE("zero epochs leaves parameters untouched") {
    Rng rng(8);
    auto m = build_model<float>(ModelKind::Ae, Shape{8, 8, 8}, 4, rng, 2);
    const auto before = m.checksum();
    auto ds = small_phantoms(3, 8, 9);
    TrainConfig cfg;
    cfg.epochs = 0;
    Rng trng(10);
    auto report = train(m, ds, cfg, trng);
    CHECK(m.checksum() == before);
    CHECK(report.total_loss.empty());
    CHECK(report.final_checksum == before);
}

TEST_CASE("training reduces reconstruction loss and is seed deterministic") {
    auto ds = small_phantoms(6, 8, 11);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 3;
    cfg.lr = 5e-3;

    Rng i1(12), i2(12);
    auto m1 = build_model<float>(ModelKind::Ae, Shape{8, 8, 8}, 4, i1, 2);
    auto m2 = build_model<float>(ModelKind::Ae, Shape{8, 8, 8}, 4, i2, 2);
    Rng t1(13), t2(13);
    auto r1 = train(m1, ds, cfg, t1);
    auto r2 = train(m2, ds, cfg, t2);

    REQUIRE(r1.total_loss.size() == 40);
    CHECK(r1.total_loss.back() < 0.6 * r1.total_loss.front());
    CHECK(r1.final_checksum == r2.final_checksum);
    CHECK(r1.wall_seconds > 0.0);
    for (std::size_t e = 0; e < 40; ++e) CHECK(r1.total_loss[e] == r2.total_loss[e]);
}

TEST_CASE("vae training keeps total above reconstruction") {
    auto ds = small_phantoms(4, 8, 14);
    Rng init(15);
    auto m = build_model<float>(ModelKind::Vae, Shape{8, 8, 8}, 4, init, 2, 1e-3);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    Rng trng(16);
    auto r = train(m, ds, cfg, trng);
    for (std::size_t e = 0; e < r.total_loss.size(); ++e) {
        CHECK(r.total_loss[e] >= r.recon_loss[e]);
        CHECK(r.kl_loss[e] >= 0.0);
    }
}

TEST_CASE("train rejects mismatched shapes and empty data") {
    Rng rng(17);
    auto m = build_model<float>(ModelKind::Ae, Shape{8, 8, 8}, 4, rng, 2);
    LabeledDataset empty;
    TrainConfig cfg;
    Rng trng(18);
    CHECK_THROWS_AS(train(m, empty, cfg, trng), ParameterError);

    LabeledDataset wrong;
    Volume v;
    v.data = Tensor<float>(Shape{16, 16, 16});
    v.id = "w";
    wrong.items.emplace_back(v, TargetPair{});
    CHECK_THROWS_AS(train(m, wrong, cfg, trng), DimensionError);
}

TEST_CASE("encode is deterministic and input sensitive") {
    Rng rng(19);
    auto m = build_model<float>(ModelKind::Ae, Shape{8, 8, 8}, 4, rng, 2);
    auto ds = small_phantoms(2, 8, 20);
    auto z0 = encode(m, ds.items[0].first);
    auto z0b = encode(m, ds.items[0].first);
    auto z1 = encode(m, ds.items[1].first);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < 4; ++i) {
        same &= z0[i] == z0b[i];
        differs |= z0[i] != z1[i];
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
    Rng rng(21);
    for (ModelKind kind : {ModelKind::Ae, ModelKind::Vae}) {
        auto m = build_model<float>(kind, Shape{8, 8, 8}, 4, rng, 2, 0.01);
        const auto dir = fs::temp_directory_path() / "volreg_latent_tests";
        fs::create_directories(dir);
        const auto base = dir / (kind == ModelKind::Ae ? "ae" : "vae");
        nlohmann::json extra;
        extra["config_hash"] = "deadbeef";
        save_model(m, base, extra);

        auto back = load_model<float>(base);
        CHECK(back.kind == m.kind);
        CHECK(back.latent_dim == m.latent_dim);
        CHECK(back.beta == m.beta);
        CHECK(back.checksum() == m.checksum());

        auto ds = small_phantoms(1, 8, 22);
        auto za = encode(m, ds.items[0].first);
        auto zb = encode(back, ds.items[0].first);
        for (std::size_t i = 0; i < za.size(); ++i) CHECK(za[i] == zb[i]);

        std::ifstream jf(base.string() + ".json");
        auto j = nlohmann::json::parse(jf);
        CHECK(j.at("run").at("config_hash") == "deadbeef");
    }
}
