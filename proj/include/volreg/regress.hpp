#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>
#include <vector>

#include <json.hpp>

#include "volreg/errors.hpp"
#include "volreg/nnops.hpp"
#include "volreg/rng.hpp"
#include "volreg/tensor.hpp"

namespace volreg {

/// Latent features plus the two-column (pt500, pt4000) target matrix.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Tensor<double> values;   // rows x cols
    Tensor<double> targets;  // rows x 2

    void validate() const {
        if (rows == 0) throw ParameterError("feature matrix has no rows");
        if (values.shape() != Shape{rows, cols}) throw DimensionError("feature matrix values shape");
        if (targets.shape() != Shape{rows, 2}) throw DimensionError("feature matrix targets shape");
    }
};

// ---------------------------------------------------------------------------
// CART regression tree with a 2-column target (summed variance reduction).
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;  // leaf prediction (per target)
};

struct TreeModel {
    std::vector<TreeNode> nodes;  // node 0 is the root
    std::size_t n_outputs = 2;

    const std::vector<double>& predict_row(const double* x) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<std::size_t>(i)];
            i = x[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

struct TreeParams {
    std::size_t max_depth = 10;
    std::size_t min_leaf = 2;
    std::size_t feature_subsample = 0;  // 0 means all features
};

namespace detail {

// Near-ties resolve to the earliest (feature, threshold) candidate.
inline constexpr double kGainTie = 1e-12;

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Best variance-reduction split over the given features, O(n log n) per
/// feature via sorted prefix sums. Gain = SSE_parent - SSE_L - SSE_R,
/// summed over target columns.
inline SplitChoice best_variance_split(const FeatureMatrix& fm, const std::vector<std::size_t>& idx,
                                       const std::vector<std::size_t>& features, std::size_t min_leaf) {
    const std::size_t n = idx.size(), K = 2;
    SplitChoice best;
    if (n < 2 * min_leaf) return best;

    double tot_sum[2] = {0, 0}, tot_sq[2] = {0, 0};
    for (std::size_t i : idx)
        for (std::size_t k = 0; k < K; ++k) {
            const double y = fm.targets(i, k);
            tot_sum[k] += y;
            tot_sq[k] += y * y;
        }
    double parent_sse = 0.0;
    for (std::size_t k = 0; k < K; ++k)
        parent_sse += tot_sq[k] - tot_sum[k] * tot_sum[k] / static_cast<double>(n);

    std::vector<std::size_t> order(idx);
    for (std::size_t f : features) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double xa = fm.values(a, f), xb = fm.values(b, f);
            return xa < xb || (xa == xb && a < b);
        });
        double lsum[2] = {0, 0}, lsq[2] = {0, 0};
        for (std::size_t p = 1; p < n; ++p) {
            const std::size_t i = order[p - 1];
            for (std::size_t k = 0; k < K; ++k) {
                const double y = fm.targets(i, k);
                lsum[k] += y;
                lsq[k] += y * y;
            }
            const double xl = fm.values(order[p - 1], f), xr = fm.values(order[p], f);
            if (xl == xr) continue;  // thresholds sit between distinct values
            if (p < min_leaf || n - p < min_leaf) continue;
            double child_sse = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const double rsum = tot_sum[k] - lsum[k], rsq = tot_sq[k] - lsq[k];
                child_sse += lsq[k] - lsum[k] * lsum[k] / static_cast<double>(p);
                child_sse += rsq - rsum * rsum / static_cast<double>(n - p);
            }
            const double gain = parent_sse - child_sse;
            if (gain > best.gain + kGainTie) {
                best.found = true;
                best.feature = f;
                best.threshold = 0.5 * (xl + xr);
                best.gain = gain;
            }
        }
    }
    if (best.found && best.gain <= kGainTie) best.found = false;
    return best;
}

inline std::vector<double> column_means(const FeatureMatrix& fm, const std::vector<std::size_t>& idx) {
    std::vector<double> m(2, 0.0);
    for (std::size_t i : idx)
        for (std::size_t k = 0; k < 2; ++k) m[k] += fm.targets(i, k);
    for (auto& v : m) v /= static_cast<double>(idx.size());
    return m;
}

inline int build_cart(const FeatureMatrix& fm, TreeModel& tree, std::vector<std::size_t> idx,
                      std::size_t depth, const TreeParams& p, Rng& rng) {
    const std::size_t d = fm.cols;
    SplitChoice split;
    if (depth < p.max_depth) {
        std::vector<std::size_t> feats;
        const std::size_t m = (p.feature_subsample == 0 || p.feature_subsample >= d) ? d : p.feature_subsample;
        if (m == d) {
            feats.resize(d);
            std::iota(feats.begin(), feats.end(), 0);
        } else {
            // partial Fisher-Yates draw of m distinct features, then sorted
            std::vector<std::size_t> pool(d);
            std::iota(pool.begin(), pool.end(), 0);
            for (std::size_t i = 0; i < m; ++i)
                std::swap(pool[i], pool[i + rng.below(d - i)]);
            feats.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
            std::sort(feats.begin(), feats.end());
        }
        split = best_variance_split(fm, idx, feats, p.min_leaf);
    }

    if (!split.found) {
        TreeNode leaf;
        leaf.value = column_means(fm, idx);
        tree.nodes.push_back(std::move(leaf));
        return static_cast<int>(tree.nodes.size() - 1);
    }

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx)
        (fm.values(i, split.feature) <= split.threshold ? li : ri).push_back(i);

    TreeNode node;
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    tree.nodes.push_back(std::move(node));
    const int self = static_cast<int>(tree.nodes.size() - 1);
    const int l = build_cart(fm, tree, std::move(li), depth + 1, p, rng);
    const int r = build_cart(fm, tree, std::move(ri), depth + 1, p, rng);
    tree.nodes[static_cast<std::size_t>(self)].left = l;
    tree.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
}

} // namespace detail

inline TreeModel fit_tree(const FeatureMatrix& fm, const TreeParams& params, Rng& rng) {
    fm.validate();
    TreeModel tree;
    std::vector<std::size_t> idx(fm.rows);
    std::iota(idx.begin(), idx.end(), 0);
    detail::build_cart(fm, tree, std::move(idx), 0, params, rng);
    return tree;
}

inline Tensor<double> tree_predict(const TreeModel& t, const FeatureMatrix& fm) {
    Tensor<double> out(Shape{fm.rows, 2});
    for (std::size_t i = 0; i < fm.rows; ++i) {
        const auto& v = t.predict_row(fm.values.data() + i * fm.cols);
        out(i, std::size_t{0}) = v[0];
        out(i, std::size_t{1}) = v.size() > 1 ? v[1] : v[0];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random forest: bootstrap resamples, mean prediction over trees.
// ---------------------------------------------------------------------------

struct ForestParams {
    std::size_t n_trees = 100;
    TreeParams tree;           // feature_subsample 0 -> ceil(cols/3)
    bool bootstrap = true;     // test hook
    std::size_t n_threads = 1; // identical output regardless of value
};

struct ForestModel {
    std::vector<TreeModel> trees;
    std::vector<std::uint64_t> tree_seeds;
};

inline ForestModel fit_forest(const FeatureMatrix& fm, ForestParams params, Rng& rng) {
    fm.validate();
    if (params.n_trees == 0) throw ParameterError("forest needs at least one tree");
    if (params.tree.feature_subsample == 0)
        params.tree.feature_subsample = (fm.cols + 2) / 3;

    ForestModel model;
    model.trees.resize(params.n_trees);
    model.tree_seeds.resize(params.n_trees);
    for (std::size_t t = 0; t < params.n_trees; ++t)
        model.tree_seeds[t] = rng.split(t).state();

    const auto build_one = [&](std::size_t t) {
        Rng tr(model.tree_seeds[t]);
        FeatureMatrix sample = fm;
        if (params.bootstrap) {
            Tensor<double> xs(Shape{fm.rows, fm.cols}), ys(Shape{fm.rows, 2});
            for (std::size_t i = 0; i < fm.rows; ++i) {
                const std::size_t src = tr.below(fm.rows);
                std::copy_n(fm.values.data() + src * fm.cols, fm.cols, xs.data() + i * fm.cols);
                std::copy_n(fm.targets.data() + src * 2, 2, ys.data() + i * 2);
            }
            sample.values = std::move(xs);
            sample.targets = std::move(ys);
        }
        model.trees[t] = fit_tree(sample, params.tree, tr);
    };

    if (params.n_threads <= 1) {
        for (std::size_t t = 0; t < params.n_trees; ++t) build_one(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < params.n_threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < params.n_trees; t = next++) build_one(t);
            });
        for (auto& th : pool) th.join();
    }
    return model;
}

inline Tensor<double> forest_predict(const ForestModel& f, const FeatureMatrix& fm) {
    Tensor<double> out(Shape{fm.rows, 2});
    for (const auto& t : f.trees) out += tree_predict(t, fm);
    out *= 1.0 / static_cast<double>(f.trees.size());
    return out;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees, one model per target column. Squared loss:
// gradients g = pred - y, unit hessians; gain and leaf weights use the
// second-order formula with L2 leaf regularizer lambda.
// ---------------------------------------------------------------------------

struct GbtParams {
    std::size_t rounds = 200;
    double shrinkage = 0.1;
    std::size_t max_depth = 3;
    double lambda = 1.0;
    double min_gain = 0.0;
    std::size_t min_leaf = 1;
};

struct BoostedModel {
    std::array<double, 2> base_score{0.0, 0.0};
    std::array<std::vector<TreeModel>, 2> trees;  // per target column
    double shrinkage = 0.1;
    double lambda = 1.0;
};

namespace detail {

struct GbtCtx {
    const FeatureMatrix* fm;
    const std::vector<double>* grad;  // per row
    const GbtParams* p;
};

inline int build_gbt_node(const GbtCtx& c, TreeModel& tree, std::vector<std::size_t> idx,
                          std::size_t depth) {
    const double lambda = c.p->lambda;
    double G = 0.0;
    for (std::size_t i : idx) G += (*c.grad)[i];
    const double H = static_cast<double>(idx.size());

    SplitChoice best;
    if (depth < c.p->max_depth && idx.size() >= 2 * c.p->min_leaf) {
        const double parent_score = G * G / (H + lambda);
        std::vector<std::size_t> order(idx);
        for (std::size_t f = 0; f < c.fm->cols; ++f) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double xa = c.fm->values(a, f), xb = c.fm->values(b, f);
                return xa < xb || (xa == xb && a < b);
            });
            double GL = 0.0;
            for (std::size_t p = 1; p < idx.size(); ++p) {
                GL += (*c.grad)[order[p - 1]];
                const double xl = c.fm->values(order[p - 1], f), xr = c.fm->values(order[p], f);
                if (xl == xr) continue;
                if (p < c.p->min_leaf || idx.size() - p < c.p->min_leaf) continue;
                const double HL = static_cast<double>(p), HR = H - HL, GR = G - GL;
                const double gain =
                    0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - parent_score);
                if (gain > best.gain + kGainTie && gain > c.p->min_gain) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = 0.5 * (xl + xr);
                    best.gain = gain;
                }
            }
        }
    }

    if (!best.found) {
        TreeNode leaf;
        leaf.value = {-G / (H + lambda)};
        tree.nodes.push_back(std::move(leaf));
        return static_cast<int>(tree.nodes.size() - 1);
    }

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx)
        (c.fm->values(i, best.feature) <= best.threshold ? li : ri).push_back(i);

    TreeNode node;
    node.feature = static_cast<int>(best.feature);
    node.threshold = best.threshold;
    tree.nodes.push_back(std::move(node));
    const int self = static_cast<int>(tree.nodes.size() - 1);
    const int l = build_gbt_node(c, tree, std::move(li), depth + 1);
    const int r = build_gbt_node(c, tree, std::move(ri), depth + 1);
    tree.nodes[static_cast<std::size_t>(self)].left = l;
    tree.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
}

} // namespace detail

inline BoostedModel fit_gbt(const FeatureMatrix& fm, const GbtParams& params) {
    fm.validate();
    if (!(params.shrinkage > 0.0) || params.shrinkage > 1.0)
        throw ParameterError("shrinkage must be in (0,1]");
    if (params.lambda < 0) throw ParameterError("lambda must be >= 0");

    BoostedModel model;
    model.shrinkage = params.shrinkage;
    model.lambda = params.lambda;
    std::vector<std::size_t> all(fm.rows);
    std::iota(all.begin(), all.end(), 0);

    for (std::size_t k = 0; k < 2; ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < fm.rows; ++i) mean += fm.targets(i, k);
        mean /= static_cast<double>(fm.rows);
        model.base_score[k] = mean;

        std::vector<double> pred(fm.rows, mean), grad(fm.rows);
        for (std::size_t round = 0; round < params.rounds; ++round) {
            for (std::size_t i = 0; i < fm.rows; ++i) grad[i] = pred[i] - fm.targets(i, k);
            TreeModel tree;
            tree.n_outputs = 1;
            detail::GbtCtx ctx{&fm, &grad, &params};
            detail::build_gbt_node(ctx, tree, all, 0);
            for (std::size_t i = 0; i < fm.rows; ++i)
                pred[i] += params.shrinkage * tree.predict_row(fm.values.data() + i * fm.cols)[0];
            model.trees[k].push_back(std::move(tree));
        }
    }
    return model;
}

inline Tensor<double> gbt_predict(const BoostedModel& m, const FeatureMatrix& fm) {
    Tensor<double> out(Shape{fm.rows, 2});
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < fm.rows; ++i) {
            double p = m.base_score[k];
            for (const auto& t : m.trees[k])
                p += m.shrinkage * t.predict_row(fm.values.data() + i * fm.cols)[0];
            out(i, k) = p;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Target standardization.
// ---------------------------------------------------------------------------

struct TargetScaler {
    std::array<double, 2> mean{0, 0};
    std::array<double, 2> std{1, 1};

    static TargetScaler fit(const Tensor<double>& y) {
        const std::size_t n = y.shape()[0];
        TargetScaler s;
        for (std::size_t k = 0; k < 2; ++k) {
            double m = 0;
            for (std::size_t i = 0; i < n; ++i) m += y(i, k);
            m /= static_cast<double>(n);
            double v = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = y(i, k) - m;
                v += d * d;
            }
            s.mean[k] = m;
            s.std[k] = std::sqrt(v / static_cast<double>(n));
            if (!(s.std[k] > 0)) throw DegenerateInputError("constant target column");
        }
        return s;
    }

    Tensor<double> forward(const Tensor<double>& y) const {
        Tensor<double> out = y;
        for (std::size_t i = 0; i < y.shape()[0]; ++i)
            for (std::size_t k = 0; k < 2; ++k) out(i, k) = (y(i, k) - mean[k]) / std[k];
        return out;
    }

    Tensor<double> inverse(const Tensor<double>& y) const {
        Tensor<double> out = y;
        for (std::size_t i = 0; i < y.shape()[0]; ++i)
            for (std::size_t k = 0; k < 2; ++k) out(i, k) = y(i, k) * std[k] + mean[k];
        return out;
    }
};

/// Per-column standardizer for input features. Constant columns (e.g. dead
/// latent dimensions) keep scale 1 so they pass through unchanged.
struct FeatureScaler {
    std::vector<double> mean, std;

    static FeatureScaler fit(const Tensor<double>& x) {
        const std::size_t n = x.shape()[0], d = x.shape()[1];
        FeatureScaler s;
        s.mean.assign(d, 0.0);
        s.std.assign(d, 1.0);
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0;
            for (std::size_t i = 0; i < n; ++i) m += x(i, j);
            m /= static_cast<double>(n);
            double v = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double diff = x(i, j) - m;
                v += diff * diff;
            }
            s.mean[j] = m;
            const double sd = std::sqrt(v / static_cast<double>(n));
            if (sd > 0) s.std[j] = sd;
        }
        return s;
    }

    /// One standardized row, as the 32-bit network input.
    Tensor<float> row(const Tensor<double>& x, std::size_t i) const {
        const std::size_t d = mean.size();
        std::vector<float> out(d);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = static_cast<float>((x(i, j) - mean[j]) / std[j]);
        return Tensor<float>::from(Shape{d}, std::move(out));
    }
};

// ---------------------------------------------------------------------------
// Two-hidden-layer MLP on standardized latent features and targets.
// ---------------------------------------------------------------------------

struct MnnConfig {
    std::vector<std::size_t> hidden{128, 64};
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    double lr = 1e-3;
};

struct MnnModel {
    std::vector<Layer<float>> layers;  // dense/relu alternating, linear output
    TargetScaler scaler;
    FeatureScaler in_scaler;
};

inline MnnModel fit_mnn(const FeatureMatrix& fm, const MnnConfig& cfg, Rng& rng) {
    fm.validate();
    MnnModel m;
    m.scaler = TargetScaler::fit(fm.targets);
    m.in_scaler = FeatureScaler::fit(fm.values);
    const Tensor<double> ystd = m.scaler.forward(fm.targets);

    std::size_t prev = fm.cols;
    for (std::size_t h : cfg.hidden) {
        m.layers.push_back(make_dense<float>(h, prev, rng));
        m.layers.push_back(make_activation<float>(LayerKind::Relu));
        prev = h;
    }
    m.layers.push_back(make_dense<float>(2, prev, rng));

    std::vector<AdamState<float>> opt_w, opt_b;
    std::vector<Tensor<float>> gw, gb;
    for (auto& l : m.layers) {
        opt_w.push_back(AdamState<float>::for_params(l.weights, cfg.lr));
        opt_b.push_back(AdamState<float>::for_params(l.bias, cfg.lr));
        gw.push_back(Tensor<float>(l.weights.shape()));
        gb.push_back(Tensor<float>(l.bias.shape()));
    }

    std::vector<Tensor<float>> xs(fm.rows), ys(fm.rows);
    for (std::size_t i = 0; i < fm.rows; ++i) {
        xs[i] = m.in_scaler.row(fm.values, i);
        std::vector<float> yv(2);
        for (std::size_t k = 0; k < 2; ++k) yv[k] = static_cast<float>(ystd(i, k));
        ys[i] = Tensor<float>::from(Shape{2}, std::move(yv));
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(fm.rows, rng);
        double etotal = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (auto& t : gw) t.fill(0);
            for (auto& t : gb) t.fill(0);
            for (std::size_t i = start; i < end; ++i) {
                const auto acts = detail::chain_forward(m.layers, xs[order[i]]);
                auto [loss, grad] = mse_loss(acts.back(), ys[order[i]]);
                etotal += loss;
                Tensor<float> g = std::move(grad);
                for (std::size_t li = m.layers.size(); li-- > 0;) {
                    Tensor<float>* lgw = m.layers[li].has_params() ? &gw[li] : nullptr;
                    Tensor<float>* lgb = m.layers[li].has_params() ? &gb[li] : nullptr;
                    g = m.layers[li].backward(acts[li], acts[li + 1], g, lgw, lgb);
                }
            }
            const float inv = 1.0f / static_cast<float>(end - start);
            for (std::size_t li = 0; li < m.layers.size(); ++li) {
                if (!m.layers[li].has_params()) continue;
                gw[li] *= inv;
                gb[li] *= inv;
                adam_step(m.layers[li].weights, gw[li], opt_w[li]);
                adam_step(m.layers[li].bias, gb[li], opt_b[li]);
            }
        }
        if (!std::isfinite(etotal))
            throw DivergenceError("mnn loss non-finite at epoch " + std::to_string(epoch));
    }
    return m;
}

inline Tensor<double> mnn_predict(const MnnModel& m, const FeatureMatrix& fm) {
    Tensor<double> out(Shape{fm.rows, 2});
    for (std::size_t i = 0; i < fm.rows; ++i) {
        Tensor<float> x = m.in_scaler.row(fm.values, i);
        for (const auto& l : m.layers) x = l.forward(x);
        for (std::size_t k = 0; k < 2; ++k) out(i, k) = x[k];
    }
    return m.scaler.inverse(out);
}

/// Unweighted elementwise mean of two prediction matrices.
inline Tensor<double> predict_ensemble(const Tensor<double>& a, const Tensor<double>& b) {
    a.require_same_shape(b);
    Tensor<double> out = a;
    out += b;
    out *= 0.5;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

/// Per-column RMSE, (pt500, pt4000), in dB.
inline std::pair<double, double> rmse(const Tensor<double>& pred, const Tensor<double>& truth) {
    pred.require_same_shape(truth);
    const std::size_t n = pred.shape()[0];
    if (n == 0) throw ParameterError("rmse needs at least one row");
    double s[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k) {
            const double d = pred(i, k) - truth(i, k);
            s[k] += d * d;
        }
    return {std::sqrt(s[0] / static_cast<double>(n)), std::sqrt(s[1] / static_cast<double>(n))};
}

inline std::pair<double, double> mae(const Tensor<double>& pred, const Tensor<double>& truth) {
    pred.require_same_shape(truth);
    const std::size_t n = pred.shape()[0];
    if (n == 0) throw ParameterError("mae needs at least one row");
    double s[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k) s[k] += std::abs(pred(i, k) - truth(i, k));
    return {s[0] / static_cast<double>(n), s[1] / static_cast<double>(n)};
}

/// Column means of the training targets, tiled over rows.
inline Tensor<double> mean_baseline(const Tensor<double>& train_targets, std::size_t rows) {
    const std::size_t n = train_targets.shape()[0];
    double m[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k) m[k] += train_targets(i, k);
    Tensor<double> out(Shape{rows, 2});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < 2; ++k) out(i, k) = m[k] / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// JSON serialization for the tree family.
// ---------------------------------------------------------------------------

inline nlohmann::json tree_to_json(const TreeModel& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
        nlohmann::json j;
        j["feature"] = n.feature;
        j["threshold"] = n.threshold;
        j["left"] = n.left;
        j["right"] = n.right;
        j["value"] = n.value;
        nodes.push_back(std::move(j));
    }
    return nlohmann::json{{"n_outputs", t.n_outputs}, {"nodes", std::move(nodes)}};
}

inline TreeModel tree_from_json(const nlohmann::json& j) {
    TreeModel t;
    t.n_outputs = j.at("n_outputs").get<std::size_t>();
    for (const auto& nj : j.at("nodes")) {
        TreeNode n;
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
        n.value = nj.at("value").get<std::vector<double>>();
        t.nodes.push_back(std::move(n));
    }
    return t;
}

inline void save_forest(const ForestModel& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["model"] = "forest";
    j["tree_seeds"] = m.tree_seeds;
    j["trees"] = nlohmann::json::array();
    for (const auto& t : m.trees) j["trees"].push_back(tree_to_json(t));
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump() << "\n";
}

inline ForestModel load_forest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    if (j.at("model") != "forest") throw FormatError("not a forest model: " + path.string());
    ForestModel m;
    m.tree_seeds = j.at("tree_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& tj : j.at("trees")) m.trees.push_back(tree_from_json(tj));
    return m;
}

inline void save_gbt(const BoostedModel& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["model"] = "gbt";
    j["base_score"] = m.base_score;
    j["shrinkage"] = m.shrinkage;
    j["lambda"] = m.lambda;
    for (std::size_t k = 0; k < 2; ++k) {
        nlohmann::json col = nlohmann::json::array();
        for (const auto& t : m.trees[k]) col.push_back(tree_to_json(t));
        j["trees"].push_back(std::move(col));
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << j.dump() << "\n";
}

inline BoostedModel load_gbt(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(f);
    if (j.at("model") != "gbt") throw FormatError("not a gbt model: " + path.string());
    BoostedModel m;
    m.base_score = j.at("base_score").get<std::array<double, 2>>();
    m.shrinkage = j.at("shrinkage").get<double>();
    m.lambda = j.at("lambda").get<double>();
    for (std::size_t k = 0; k < 2; ++k)
        for (const auto& tj : j.at("trees")[k]) m.trees[k].push_back(tree_from_json(tj));
    return m;
}

} // namespace volreg
