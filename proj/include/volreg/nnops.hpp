#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "volreg/errors.hpp"
#include "volreg/rng.hpp"
#include "volreg/tensor.hpp"

namespace volreg {

// ---------------------------------------------------------------------------
// conv3d: input [Cin,D,H,W], weights [Cout,Cin,kD,kH,kW], zero padding.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvGrads {
    Tensor<T> grad_input;
    Tensor<T> grad_weights;
    Tensor<T> grad_bias;
};

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
    if (in + 2 * pad < k)
        throw DimensionError("kernel " + std::to_string(k) + " exceeds padded input " +
                             std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace detail

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride, std::size_t pad) {
    if (x.rank() != 4 || w.rank() != 5) throw DimensionError("conv3d expects [C,D,H,W] input and [Co,Ci,k,k,k] weights");
    const std::size_t Ci = x.shape()[0], D = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Co = w.shape()[0], kD = w.shape()[2], kH = w.shape()[3], kW = w.shape()[4];
    if (w.shape()[1] != Ci) throw DimensionError("conv3d channel mismatch");
    const std::size_t OD = detail::conv_out_extent(D, kD, stride, pad);
    const std::size_t OH = detail::conv_out_extent(H, kH, stride, pad);
    const std::size_t OW = detail::conv_out_extent(W, kW, stride, pad);

    Tensor<T> y(Shape{Co, OD, OH, OW});
    for (std::size_t oc = 0; oc < Co; ++oc)
        for (std::size_t od = 0; od < OD; ++od)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    T acc = b.empty() ? T(0) : b[oc];
                    for (std::size_t ic = 0; ic < Ci; ++ic)
                        for (std::size_t kz = 0; kz < kD; ++kz) {
                            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(od * stride + kz) - static_cast<std::ptrdiff_t>(pad);
                            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D)) continue;
                            for (std::size_t ky = 0; ky < kH; ++ky) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oh * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                                for (std::size_t kx = 0; kx < kW; ++kx) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ow * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                    acc += x(ic, static_cast<std::size_t>(iz), static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                           w(oc, ic, kz, ky, kx);
                                }
                            }
                        }
                    y(oc, od, oh, ow) = acc;
                }
    return y;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                             std::size_t pad, const Tensor<T>& grad_out) {
    const std::size_t Ci = x.shape()[0], D = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Co = w.shape()[0], kD = w.shape()[2], kH = w.shape()[3], kW = w.shape()[4];
    const std::size_t OD = grad_out.shape()[1], OH = grad_out.shape()[2], OW = grad_out.shape()[3];

    ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{Co})};
    for (std::size_t oc = 0; oc < Co; ++oc)
        for (std::size_t od = 0; od < OD; ++od)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    const T go = grad_out(oc, od, oh, ow);
                    g.grad_bias[oc] += go;
                    for (std::size_t ic = 0; ic < Ci; ++ic)
                        for (std::size_t kz = 0; kz < kD; ++kz) {
                            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(od * stride + kz) - static_cast<std::ptrdiff_t>(pad);
                            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D)) continue;
                            for (std::size_t ky = 0; ky < kH; ++ky) {
                                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oh * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                                for (std::size_t kx = 0; kx < kW; ++kx) {
                                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ow * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                                    const std::size_t uz = static_cast<std::size_t>(iz), uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                                    g.grad_weights(oc, ic, kz, ky, kx) += go * x(ic, uz, uy, ux);
                                    g.grad_input(ic, uz, uy, ux) += go * w(oc, ic, kz, ky, kx);
                                }
                            }
                        }
                }
    return g;
}

// ---------------------------------------------------------------------------
// conv_transpose3d: input [Cin,D,H,W], weights [Cin,Cout,kD,kH,kW].
// Forward is the exact adjoint of conv3d with the same stride/pad; out_pad
// appends extra extent at the far edge so stride-2 mirrors close exactly.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv_transpose3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                   std::size_t stride, std::size_t pad, std::size_t out_pad = 0) {
    if (x.rank() != 4 || w.rank() != 5) throw DimensionError("conv_transpose3d expects [C,D,H,W] input and [Ci,Co,k,k,k] weights");
    const std::size_t Ci = x.shape()[0], D = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (w.shape()[0] != Ci) throw DimensionError("conv_transpose3d channel mismatch");
    const std::size_t Co = w.shape()[1], kD = w.shape()[2], kH = w.shape()[3], kW = w.shape()[4];
    const auto out_extent = [&](std::size_t in, std::size_t k) -> std::size_t {
        const std::size_t grow = (in - 1) * stride + k + out_pad;
        if (grow < 2 * pad) throw DimensionError("conv_transpose3d padding exceeds output");
        return grow - 2 * pad;
    };
    const std::size_t OD = out_extent(D, kD), OH = out_extent(H, kH), OW = out_extent(W, kW);

    Tensor<T> y(Shape{Co, OD, OH, OW});
    if (!b.empty())
        for (std::size_t oc = 0; oc < Co; ++oc)
            for (std::size_t i = 0; i < OD * OH * OW; ++i) y[oc * OD * OH * OW + i] = b[oc];

    for (std::size_t ic = 0; ic < Ci; ++ic)
        for (std::size_t iz = 0; iz < D; ++iz)
            for (std::size_t iy = 0; iy < H; ++iy)
                for (std::size_t ix = 0; ix < W; ++ix) {
                    const T xv = x(ic, iz, iy, ix);
                    for (std::size_t oc = 0; oc < Co; ++oc)
                        for (std::size_t kz = 0; kz < kD; ++kz) {
                            const std::ptrdiff_t oz = static_cast<std::ptrdiff_t>(iz * stride + kz) - static_cast<std::ptrdiff_t>(pad);
                            if (oz < 0 || oz >= static_cast<std::ptrdiff_t>(OD)) continue;
                            for (std::size_t ky = 0; ky < kH; ++ky) {
                                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(OH)) continue;
                                for (std::size_t kx = 0; kx < kW; ++kx) {
                                    const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                    if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(OW)) continue;
                                    y(oc, static_cast<std::size_t>(oz), static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) +=
                                        xv * w(ic, oc, kz, ky, kx);
                                }
                            }
                        }
                }
    return y;
}

template <typename T>
ConvGrads<T> conv_transpose3d_backward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                                       std::size_t pad, const Tensor<T>& grad_out) {
    const std::size_t Ci = x.shape()[0], D = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Co = w.shape()[1], kD = w.shape()[2], kH = w.shape()[3], kW = w.shape()[4];
    const std::size_t OD = grad_out.shape()[1], OH = grad_out.shape()[2], OW = grad_out.shape()[3];

    ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>(Shape{Co})};
    for (std::size_t oc = 0; oc < Co; ++oc)
        for (std::size_t i = 0; i < OD * OH * OW; ++i) g.grad_bias[oc] += grad_out[oc * OD * OH * OW + i];

    for (std::size_t ic = 0; ic < Ci; ++ic)
        for (std::size_t iz = 0; iz < D; ++iz)
            for (std::size_t iy = 0; iy < H; ++iy)
                for (std::size_t ix = 0; ix < W; ++ix) {
                    const T xv = x(ic, iz, iy, ix);
                    T gin = T(0);
                    for (std::size_t oc = 0; oc < Co; ++oc)
                        for (std::size_t kz = 0; kz < kD; ++kz) {
                            const std::ptrdiff_t oz = static_cast<std::ptrdiff_t>(iz * stride + kz) - static_cast<std::ptrdiff_t>(pad);
                            if (oz < 0 || oz >= static_cast<std::ptrdiff_t>(OD)) continue;
                            for (std::size_t ky = 0; ky < kH; ++ky) {
                                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(OH)) continue;
                                for (std::size_t kx = 0; kx < kW; ++kx) {
                                    const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                    if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(OW)) continue;
                                    const T go = grad_out(oc, static_cast<std::size_t>(oz), static_cast<std::size_t>(oy), static_cast<std::size_t>(ox));
                                    gin += go * w(ic, oc, kz, ky, kx);
                                    g.grad_weights(ic, oc, kz, ky, kx) += xv * go;
                                }
                            }
                        }
                    g.grad_input(ic, iz, iy, ix) = gin;
                }
    return g;
}

// ---------------------------------------------------------------------------
// dense: y = W x + b, weights [out,in].
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t out = w.shape()[0], in = w.shape()[1];
    if (x.size() != in) throw DimensionError("dense input length " + std::to_string(x.size()) + " vs " + std::to_string(in));
    Tensor<T> y(Shape{out});
    for (std::size_t o = 0; o < out; ++o) {
        T acc = b.empty() ? T(0) : b[o];
        const T* wrow = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
    }
    return y;
}

template <typename T>
ConvGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out) {
    const std::size_t out = w.shape()[0], in = w.shape()[1];
    ConvGrads<T> g{Tensor<T>(Shape{in}), Tensor<T>(w.shape()), Tensor<T>(Shape{out})};
    for (std::size_t o = 0; o < out; ++o) {
        const T go = grad_out[o];
        g.grad_bias[o] = go;
        const T* wrow = w.data() + o * in;
        T* gwrow = g.grad_weights.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            gwrow[i] = go * x[i];
            g.grad_input[i] += go * wrow[i];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Activations. ReLU subgradient at 0 is 0.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < T(0)) y[i] = T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    Tensor<T> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y;
}

/// Takes the forward output y, not the pre-activation.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
    Tensor<T> g(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (T(1) - y[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    double loss;
    Tensor<T> grad;
};

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    pred.require_same_shape(target);
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    Tensor<T> grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        loss += d * d;
        grad[i] = static_cast<T>(2.0 * d / n);
    }
    return {loss / n, std::move(grad)};
}

template <typename T>
struct KlResult {
    double loss;
    Tensor<T> grad_mu;
    Tensor<T> grad_logvar;
};

/// KL(N(mu, e^logvar) || N(0, 1)), summed over latent dims and averaged
/// over the batch (leading axis of a rank-2 input; rank-1 means batch 1).
template <typename T>
KlResult<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
    mu.require_same_shape(logvar);
    const double batch = mu.rank() == 2 ? static_cast<double>(mu.shape()[0]) : 1.0;
    double loss = 0.0;
    KlResult<T> r{0.0, Tensor<T>(mu.shape()), Tensor<T>(mu.shape())};
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m = mu[i], lv = logvar[i];
        const double ev = std::exp(lv);
        loss += -0.5 * (1.0 + lv - m * m - ev);
        r.grad_mu[i] = static_cast<T>(m / batch);
        r.grad_logvar[i] = static_cast<T>(0.5 * (ev - 1.0) / batch);
    }
    r.loss = loss / batch;
    return r;
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
    std::int64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const Tensor<T>& params, double lr = 1e-3) {
        AdamState s;
        s.m = Tensor<T>(params.shape());
        s.v = Tensor<T>(params.shape());
        s.lr = lr;
        return s;
    }
};

template <typename T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, AdamState<T>& state) {
    params.require_same_shape(grads);
    state.t += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * g;
        const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[i] = static_cast<T>(params[i] - state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
}

// ---------------------------------------------------------------------------
// Layer container: one link of a fixed feed-forward chain.
// ---------------------------------------------------------------------------

enum class LayerKind { Conv3d, ConvTranspose3d, Dense, Relu, Sigmoid, Flatten, Reshape };

inline std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv3d: return "conv3d";
        case LayerKind::ConvTranspose3d: return "conv_transpose3d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Reshape: return "reshape";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv3d") return LayerKind::Conv3d;
    if (s == "conv_transpose3d") return LayerKind::ConvTranspose3d;
    if (s == "dense") return LayerKind::Dense;
    if (s == "relu") return LayerKind::Relu;
    if (s == "sigmoid") return LayerKind::Sigmoid;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "reshape") return LayerKind::Reshape;
    throw FormatError("unknown layer kind '" + s + "'");
}

template <typename T = float>
struct Layer {
    LayerKind kind;
    Tensor<T> weights;  // empty for parameterless kinds
    Tensor<T> bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t out_pad = 0;
    Shape target_shape;  // reshape only

    Tensor<T> forward(const Tensor<T>& x) const {
        switch (kind) {
            case LayerKind::Conv3d: return conv3d_forward(x, weights, bias, stride, pad);
            case LayerKind::ConvTranspose3d: return conv_transpose3d_forward(x, weights, bias, stride, pad, out_pad);
            case LayerKind::Dense: return dense_forward(x, weights, bias);
            case LayerKind::Relu: return relu_forward(x);
            case LayerKind::Sigmoid: return sigmoid_forward(x);
            case LayerKind::Flatten: return x.reshape(Shape{x.size()});
            case LayerKind::Reshape: return x.reshape(target_shape);
        }
        throw ParameterError("bad layer kind");
    }

    /// grad_in given the cached forward input (and output for sigmoid).
    /// Parameter gradients accumulate into gw/gb when present.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& grad_out,
                       Tensor<T>* gw, Tensor<T>* gb) const {
        switch (kind) {
            case LayerKind::Conv3d: {
                auto g = conv3d_backward(x, weights, stride, pad, grad_out);
                if (gw) *gw += g.grad_weights;
                if (gb) *gb += g.grad_bias;
                return std::move(g.grad_input);
            }
            case LayerKind::ConvTranspose3d: {
                auto g = conv_transpose3d_backward(x, weights, stride, pad, grad_out);
                if (gw) *gw += g.grad_weights;
                if (gb) *gb += g.grad_bias;
                return std::move(g.grad_input);
            }
            case LayerKind::Dense: {
                auto g = dense_backward(x, weights, grad_out);
                if (gw) *gw += g.grad_weights;
                if (gb) *gb += g.grad_bias;
                return std::move(g.grad_input);
            }
            case LayerKind::Relu: return relu_backward(x, grad_out);
            case LayerKind::Sigmoid: return sigmoid_backward(y, grad_out);
            case LayerKind::Flatten: return grad_out.reshape(x.shape());
            case LayerKind::Reshape: return grad_out.reshape(x.shape());
        }
        throw ParameterError("bad layer kind");
    }

    bool has_params() const {
        return kind == LayerKind::Conv3d || kind == LayerKind::ConvTranspose3d || kind == LayerKind::Dense;
    }
};

namespace detail {

template <typename T>
std::vector<Tensor<T>> chain_forward(const std::vector<Layer<T>>& layers, const Tensor<T>& x) {
    std::vector<Tensor<T>> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(x);
    for (const auto& l : layers) acts.push_back(l.forward(acts.back()));
    return acts;
}

template <typename T>
Tensor<T> chain_backward(const std::vector<Layer<T>>& layers, const std::vector<Tensor<T>>& acts,
                         Tensor<T> grad, std::vector<Tensor<T>>* gw, std::vector<Tensor<T>>* gb) {
    for (std::size_t i = layers.size(); i-- > 0;) {
        Tensor<T>* lgw = (gw && layers[i].has_params()) ? &(*gw)[i] : nullptr;
        Tensor<T>* lgb = (gb && layers[i].has_params()) ? &(*gb)[i] : nullptr;
        grad = layers[i].backward(acts[i], acts[i + 1], grad, lgw, lgb);
    }
    return grad;
}

} // namespace detail

// Fan-based uniform init: w ~ U(-s, s), s = sqrt(6/(fan_in+fan_out)); biases 0.

template <typename T = float>
Tensor<T> init_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> w(std::move(shape));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-s, s));
    return w;
}

template <typename T = float>
Layer<T> make_dense(std::size_t out, std::size_t in, Rng& rng) {
    Layer<T> l;
    l.kind = LayerKind::Dense;
    l.weights = init_uniform<T>(Shape{out, in}, in, out, rng);
    l.bias = Tensor<T>(Shape{out});
    return l;
}

template <typename T = float>
Layer<T> make_conv3d(std::size_t out_ch, std::size_t in_ch, std::size_t k, std::size_t stride,
                     std::size_t pad, Rng& rng) {
    Layer<T> l;
    l.kind = LayerKind::Conv3d;
    l.weights = init_uniform<T>(Shape{out_ch, in_ch, k, k, k}, in_ch * k * k * k, out_ch * k * k * k, rng);
    l.bias = Tensor<T>(Shape{out_ch});
    l.stride = stride;
    l.pad = pad;
    return l;
}

template <typename T = float>
Layer<T> make_conv_transpose3d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                               std::size_t stride, std::size_t pad, std::size_t out_pad, Rng& rng) {
    Layer<T> l;
    l.kind = LayerKind::ConvTranspose3d;
    l.weights = init_uniform<T>(Shape{in_ch, out_ch, k, k, k}, in_ch * k * k * k, out_ch * k * k * k, rng);
    l.bias = Tensor<T>(Shape{out_ch});
    l.stride = stride;
    l.pad = pad;
    l.out_pad = out_pad;
    return l;
}

template <typename T = float>
Layer<T> make_activation(LayerKind kind) {
    Layer<T> l;
    l.kind = kind;
    return l;
}

template <typename T = float>
Layer<T> make_reshape(Shape target) {
    Layer<T> l;
    l.kind = LayerKind::Reshape;
    l.target_shape = std::move(target);
    return l;
}

} // namespace volreg
