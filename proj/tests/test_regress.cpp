#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "volreg/regress.hpp"

using namespace volreg;
namespace fs = std::filesystem;

namespace {

FeatureMatrix make_fm(std::size_t rows, std::size_t cols, Rng& rng,
                      double (*target_fn)(const double*, std::size_t, std::size_t) = nullptr) {
    FeatureMatrix fm;
    fm.rows = rows;
    fm.cols = cols;
    fm.values = Tensor<double>(Shape{rows, cols});
    fm.targets = Tensor<double>(Shape{rows, 2});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) fm.values(i, j) = rng.uniform(-3.0, 3.0);
        for (std::size_t k = 0; k < 2; ++k)
            fm.targets(i, k) = target_fn ? target_fn(fm.values.data() + i * cols, cols, k)
                                         : rng.uniform(-10.0, 10.0);
    }
    return fm;
}

/// Exhaustive split search sharing the library's tie rule: strictly greater
/// gain by more than 1e-12, features ascending, thresholds ascending.
detail::SplitChoice brute_force_split(const FeatureMatrix& fm, std::size_t min_leaf) {
    const std::size_t n = fm.rows;
    const auto sse = [&](const std::vector<std::size_t>& idx) {
        double total = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            double m = 0;
            for (std::size_t i : idx) m += fm.targets(i, k);
            m /= static_cast<double>(idx.size());
            for (std::size_t i : idx) {
                const double d = fm.targets(i, k) - m;
                total += d * d;
            }
        }
        return total;
    };
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const double parent = sse(all);

    detail::SplitChoice best;
    for (std::size_t f = 0; f < fm.cols; ++f) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < n; ++i) vals.push_back(fm.values(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
            const double thr = 0.5 * (vals[v] + vals[v + 1]);
            std::vector<std::size_t> li, ri;
            for (std::size_t i = 0; i < n; ++i)
                (fm.values(i, f) <= thr ? li : ri).push_back(i);
            if (li.size() < min_leaf || ri.size() < min_leaf) continue;
            const double gain = parent - sse(li) - sse(ri);
            if (gain > best.gain + 1e-12) {
                best.found = true;
                best.feature = f;
                best.threshold = thr;
                best.gain = gain;
            }
        }
    }
    if (best.found && best.gain <= 1e-12) best.found = false;
    return best;
}

} // namespace

// ---------------------------------------------------------------------------
// CART
// ---------------------------------------------------------------------------

TEST_CASE("variance split matches exhaustive search on random datasets") {
    Rng rng(100);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + rng.below(16);
        const std::size_t d = 1 + rng.below(4);
        auto fm = make_fm(n, d, rng);
        std::vector<std::size_t> idx(n), feats(d);
        std::iota(idx.begin(), idx.end(), 0);
        std::iota(feats.begin(), feats.end(), 0);
        const std::size_t min_leaf = 1 + rng.below(3);

        auto got = detail::best_variance_split(fm, idx, feats, min_leaf);
        auto want = brute_force_split(fm, min_leaf);
        CHECK(got.found == want.found);
        if (got.found && want.found) {
            CHECK(got.feature == want.feature);
            CHECK(got.threshold == doctest::Approx(want.threshold).epsilon(1e-12));
            CHECK(got.gain == doctest::Approx(want.gain).epsilon(1e-9));
        }
    }
}

TEST_CASE("hand split and leaf means") {
    FeatureMatrix fm;
    fm.rows = 4;
    fm.cols = 1;
    fm.values = Tensor<double>::from({4, 1}, {1, 2, 3, 4});
    fm.targets = Tensor<double>::from({4, 2}, {0, 100, 0, 100, 10, 200, 10, 200});
    TreeParams p;
    p.min_leaf = 1;
    Rng rng(1);
    auto t = fit_tree(fm, p, rng);
    CHECK(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == doctest::Approx(2.5));
    auto pred = tree_predict(t, fm);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(pred(i, std::size_t{0}) == doctest::Approx(fm.targets(i, std::size_t{0})));
        CHECK(pred(i, std::size_t{1}) == doctest::Approx(fm.targets(i, std::size_t{1})));
    }
}

TEST_CASE("constant targets give a single leaf") {
    Rng rng(2);
    auto fm = make_fm(10, 3, rng);
    for (std::size_t i = 0; i < 10; ++i) {
        fm.targets(i, std::size_t{0}) = 7.0;
        fm.targets(i, std::size_t{1}) = -3.0;
    }
    TreeParams p;
    Rng trng(3);
    auto t = fit_tree(fm, p, trng);
    CHECK(t.nodes.size() == 1);
    CHECK(t.nodes[0].feature == -1);
    CHECK(t.nodes[0].value[0] == doctest::Approx(7.0));
    CHECK(t.nodes[0].value[1] == doctest::Approx(-3.0));
}

TEST_CASE("unbounded tree fits training data exactly") {
    Rng rng(4);
    auto fm = make_fm(30, 2, rng);
    TreeParams p;
    p.max_depth = 30;
    p.min_leaf = 1;
    Rng trng(5);
    auto t = fit_tree(fm, p, trng);
    auto pred = tree_predict(t, fm);
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(pred(i, k) == doctest::Approx(fm.targets(i, k)).epsilon(1e-9));
}

TEST_CASE("tree predictions are invariant to monotone feature scaling") {
    Rng rng(6);
    auto fm = make_fm(40, 3, rng);
    FeatureMatrix scaled = fm;
    scaled.values = Tensor<double>(fm.values.shape());
    for (std::size_t i = 0; i < fm.values.size(); ++i)
        scaled.values[i] = 5.0 * fm.values[i] + 2.0;
    TreeParams p;
    p.min_leaf = 2;
    Rng t1(7), t2(7);
    auto pa = tree_predict(fit_tree(fm, p, t1), fm);
    auto pb = tree_predict(fit_tree(scaled, p, t2), scaled);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-9));
}

TEST_CASE("manual tree routing") {
    TreeModel t;
    t.nodes.resize(3);
    t.nodes[0].feature = 1;
    t.nodes[0].threshold = 0.0;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].value = {1.0, 2.0};
    t.nodes[2].value = {3.0, 4.0};
    const double lo[2] = {99.0, -0.5};
    const double hi[2] = {-99.0, 0.5};
    CHECK(t.predict_row(lo)[0] == 1.0);
    CHECK(t.predict_row(hi)[1] == 4.0);
    const double edge[2] = {0.0, 0.0};  // ties go left
    CHECK(t.predict_row(edge)[0] == 1.0);
}

TEST_CASE("feature matrix validation") {
    FeatureMatrix empty;
    CHECK_THROWS_AS(empty.validate(), ParameterError);
    FeatureMatrix bad;
    bad.rows = 3;
    bad.cols = 2;
    bad.values = Tensor<double>(Shape{3, 2});
    bad.targets = Tensor<double>(Shape{3, 3});
    CHECK_THROWS_AS(bad.validate(), DimensionError);
}

// ---------------------------------------------------------------------------
// forest
// ---------------------------------------------------------------------------

TEST_CASE("forest without bootstrap or subsampling degenerates to one tree") {
    Rng rng(8);
    auto fm = make_fm(25, 3, rng);
    ForestParams p;
    p.n_trees = 4;
    p.bootstrap = false;
    p.tree.feature_subsample = 3;
    Rng f1(9);
    auto forest = fit_forest(fm, p, f1);
    Rng t1(10);
    auto single = fit_tree(fm, p.tree, t1);
    auto fp = forest_predict(forest, fm);
    auto sp = tree_predict(single, fm);
    for (std::size_t i = 0; i < fp.size(); ++i) CHECK(fp[i] == doctest::Approx(sp[i]).epsilon(1e-12));
}

TEST_CASE("parallel forest equals serial forest exactly") {
    Rng rng(11);
    auto fm = make_fm(60, 5, rng);
    ForestParams serial;
    serial.n_trees = 12;
    serial.n_threads = 1;
    ForestParams parallel = serial;
    parallel.n_threads = 4;
    Rng r1(12), r2(12);
    auto a = fit_forest(fm, serial, r1);
    auto b = fit_forest(fm, parallel, r2);
    REQUIRE(a.trees.size() == b.trees.size());
    CHECK(a.tree_seeds == b.tree_seeds);
    auto pa = forest_predict(a, fm);
    auto pb = forest_predict(b, fm);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("forest averages trees and beats a stump on smooth data") {
    Rng rng(13);
    auto fm = make_fm(120, 3, rng, [](const double* x, std::size_t, std::size_t k) {
        return k == 0 ? 3.0 * x[0] - x[1] : x[1] * x[1] + x[2];
    });
    ForestParams p;
    p.n_trees = 30;
    Rng frng(14);
    auto f = fit_forest(fm, p, frng);
    auto pred = forest_predict(f, fm);
    auto [r0, r1] = rmse(pred, fm.targets);
    auto base = mean_baseline(fm.targets, fm.rows);
    auto [b0, b1] = rmse(base, fm.targets);
    CHECK(r0 < 0.5 * b0);
    CHECK(r1 < 0.5 * b1);

    CHECK_THROWS_AS(fit_forest(fm, ForestParams{.n_trees = 0}, frng), ParameterError);
}

// ---------------------------------------------------------------------------
// gradient boosting
// ---------------------------------------------------------------------------

TEST_CASE("one unshrunk round with lambda zero reproduces leaf means") {
    FeatureMatrix fm;
    fm.rows = 4;
    fm.cols = 1;
    fm.values = Tensor<double>::from({4, 1}, {1, 2, 3, 4});
    fm.targets = Tensor<double>::from({4, 2}, {10, 0, 10, 0, 20, 4, 20, 4});
    GbtParams p;
    p.rounds = 1;
    p.shrinkage = 1.0;
    p.lambda = 0.0;
    p.max_depth = 1;
    auto m = fit_gbt(fm, p);
    CHECK(m.base_score[0] == doctest::Approx(15.0));
    CHECK(m.trees[0][0].nodes[0].feature == 0);
    CHECK(m.trees[0][0].nodes[0].threshold == doctest::Approx(2.5));
    auto pred = gbt_predict(m, fm);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(pred(i, k) == doctest::Approx(fm.targets(i, k)).epsilon(1e-9));
}

TEST_CASE("lambda shrinks leaf weights toward zero") {
    FeatureMatrix fm;
    fm.rows = 4;
    fm.cols = 1;
    fm.values = Tensor<double>::from({4, 1}, {1, 2, 3, 4});
    fm.targets = Tensor<double>::from({4, 2}, {10, 10, 10, 10, 20, 20, 20, 20});
    GbtParams p;
    p.rounds = 1;
    p.shrinkage = 1.0;
    p.lambda = 2.0;
    p.max_depth = 1;
    auto m = fit_gbt(fm, p);
    // residuals +-5, leaf weight -G/(H+lambda) = 5*2/(2+2) = 2.5
    auto pred = gbt_predict(m, fm);
    CHECK(pred(std::size_t{0}, std::size_t{0}) == doctest::Approx(15.0 - 2.5));
    CHECK(pred(std::size_t{2}, std::size_t{0}) == doctest::Approx(15.0 + 2.5));
}

TEST_CASE("more rounds never increase training rmse") {
    Rng rng(15);
    auto fm = make_fm(50, 3, rng, [](const double* x, std::size_t, std::size_t k) {
        return k == 0 ? x[0] * x[1] : std::sin(x[2]) * 4.0;
    });
    GbtParams p;
    p.shrinkage = 0.3;
    double prev = 1e300;
    for (std::size_t rounds : {1u, 5u, 20u, 80u}) {
        GbtParams pr = p;
        pr.rounds = rounds;
        auto m = fit_gbt(fm, pr);
        auto [r0, r1] = rmse(gbt_predict(m, fm), fm.targets);
        const double total = r0 + r1;
        CHECK(total <= prev + 1e-9);
        prev = total;
    }
}

TEST_CASE("deep unshrunk boosting fits training data exactly") {
    Rng rng(16);
    auto fm = make_fm(20, 2, rng);
    GbtParams p;
    p.rounds = 30;
    p.shrinkage = 1.0;
    p.lambda = 0.0;
    p.max_depth = 8;
    auto m = fit_gbt(fm, p);
    auto pred = gbt_predict(m, fm);
    for (std::size_t i = 0; i < fm.rows; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(pred(i, k) == doctest::Approx(fm.targets(i, k)).epsilon(1e-7));
}

TEST_CASE("gbt parameter validation") {
    Rng rng(17);
    auto fm = make_fm(10, 2, rng);
    GbtParams bad;
    bad.shrinkage = 0.0;
    CHECK_THROWS_AS(fit_gbt(fm, bad), ParameterError);
    bad.shrinkage = 1.5;
    CHECK_THROWS_AS(fit_gbt(fm, bad), ParameterError);
    bad.shrinkage = 0.1;
    bad.lambda = -1.0;
    CHECK_THROWS_AS(fit_gbt(fm, bad), ParameterError);
}

// ---------------------------------------------------------------------------
// scaler + MNN
// ---------------------------------------------------------------------------

TEST_CASE("target scaler standardizes and round-trips") {
    auto y = Tensor<double>::from({4, 2}, {1, 10, 3, 20, 5, 30, 7, 40});
    auto s = TargetScaler::fit(y);
    CHECK(s.mean[0] == doctest::Approx(4.0));
    CHECK(s.mean[1] == doctest::Approx(25.0));
    CHECK(s.std[0] == doctest::Approx(std::sqrt(5.0)));        // population std
    CHECK(s.std[1] == doctest::Approx(std::sqrt(125.0)));

    auto f = s.forward(y);
    double m0 = 0, v0 = 0;
    for (std::size_t i = 0; i < 4; ++i) m0 += f(i, std::size_t{0});
    m0 /= 4;
    for (std::size_t i = 0; i < 4; ++i) v0 += f(i, std::size_t{0}) * f(i, std::size_t{0});
    CHECK(std::abs(m0) < 1e-12);
    CHECK(v0 / 4 == doctest::Approx(1.0));

    auto back = s.inverse(f);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(back[i] == doctest::Approx(y[i]).epsilon(1e-12));

    auto flat = Tensor<double>::from({3, 2}, {5, 1, 5, 2, 5, 3});
    CHECK_THROWS_AS(TargetScaler::fit(flat), DegenerateInputError);
}

TEST_CASE("mnn learns a linear map and beats the mean baseline") {
    Rng rng(18);
    auto fm = make_fm(80, 4, rng, [](const double* x, std::size_t, std::size_t k) {
        return k == 0 ? 20.0 + 8.0 * x[0] - 3.0 * x[1] : 50.0 + 5.0 * x[2] + 2.0 * x[3];
    });
    MnnConfig cfg;
    cfg.hidden = {16, 8};
    cfg.epochs = 150;
    cfg.batch_size = 8;
    cfg.lr = 3e-3;
    Rng m1(19), m2(19);
    auto a = fit_mnn(fm, cfg, m1);
    auto b = fit_mnn(fm, cfg, m2);
    auto pa = mnn_predict(a, fm);
    auto pb = mnn_predict(b, fm);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);  // seed determinism

    auto [r0, r1] = rmse(pa, fm.targets);
    auto [b0, b1] = rmse(mean_baseline(fm.targets, fm.rows), fm.targets);
    CHECK(r0 < 0.4 * b0);
    CHECK(r1 < 0.4 * b1);
    // architecture: two hidden layers -> dense,relu,dense,relu,dense
    CHECK(a.layers.size() == 5);
    CHECK(a.layers.back().weights.shape()[0] == 2);
}

// ---------------------------------------------------------------------------
// metrics + ensemble
// ---------------------------------------------------------------------------

TEST_CASE("rmse and mae hand values") {
    auto pred = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    auto truth = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    auto [z0, z1] = rmse(pred, truth);
    CHECK(z0 == 0.0);
    CHECK(z1 == 0.0);

    auto off = Tensor<double>::from({2, 2}, {2, 5, 6, 0});
    auto [r0, r1] = rmse(off, truth);
    CHECK(r0 == doctest::Approx(std::sqrt((1.0 + 9.0) / 2.0)));
    CHECK(r1 == doctest::Approx(std::sqrt((9.0 + 16.0) / 2.0)));
    auto [m0, m1] = mae(off, truth);
    CHECK(m0 == doctest::Approx(2.0));
    CHECK(m1 == doctest::Approx(3.5));

    CHECK_THROWS_AS(rmse(pred, Tensor<double>(Shape{3, 2})), DimensionError);
}

TEST_CASE("mean baseline tiles the training column means") {
    auto y = Tensor<double>::from({3, 2}, {0, 10, 3, 20, 6, 30});
    auto b = mean_baseline(y, 2);
    CHECK(b.shape() == Shape{2, 2});
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(b(i, std::size_t{0}) == doctest::Approx(3.0));
        CHECK(b(i, std::size_t{1}) == doctest::Approx(20.0));
    }
}

TEST_CASE("ensemble is the elementwise mean") {
    auto a = Tensor<double>::from({2, 2}, {0, 2, 4, 6});
    auto b = Tensor<double>::from({2, 2}, {2, 2, 0, 10});
    auto e = predict_ensemble(a, b);
    CHECK(e[0] == 1.0);
    CHECK(e[1] == 2.0);
    CHECK(e[2] == 2.0);
    CHECK(e[3] == 8.0);
    CHECK_THROWS_AS(predict_ensemble(a, Tensor<double>(Shape{3, 2})), DimensionError);
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

TEST_CASE("forest and gbt survive a save/load round trip") {
    Rng rng(20);
    auto fm = make_fm(30, 3, rng);
    const auto dir = fs::temp_directory_path() / "volreg_regress_tests";
    fs::create_directories(dir);

    ForestParams fp;
    fp.n_trees = 5;
    Rng frng(21);
    auto forest = fit_forest(fm, fp, frng);
    save_forest(forest, dir / "forest.json");
    auto forest2 = load_forest(dir / "forest.json");
    auto p1 = forest_predict(forest, fm);
    auto p2 = forest_predict(forest2, fm);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);

    GbtParams gp;
    gp.rounds = 10;
    auto gbt = fit_gbt(fm, gp);
    save_gbt(gbt, dir / "gbt.json");
    auto gbt2 = load_gbt(dir / "gbt.json");
    auto g1 = gbt_predict(gbt, fm);
    auto g2 = gbt_predict(gbt2, fm);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);

    CHECK_THROWS_AS(load_forest(dir / "gbt.json"), FormatError);
    CHECK_THROWS_AS(load_gbt(dir / "forest.json"), FormatError);
    CHECK_THROWS_AS(load_forest(dir / "nope.json"), IoError);
}
