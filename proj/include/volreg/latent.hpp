#pragma once

#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "volreg/errors.hpp"
#include "volreg/model_io.hpp"
#include "volreg/nnops.hpp"
#include "volreg/rng.hpp"
#include "volreg/volio.hpp"

namespace volreg {

enum class ModelKind { Ae, Vae };

inline std::string model_kind_name(ModelKind k) { return k == ModelKind::Ae ? "ae" : "vae"; }
inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "ae") return ModelKind::Ae;
    if (s == "vae") return ModelKind::Vae;
    throw FormatError("unknown model kind '" + s + "'");
}

/// Per-sample VAE posterior parameters.
template <typename T = float>
struct LatentDistribution {
    Tensor<T> mu;
    Tensor<T> logvar;
};

/// Mirrored conv encoder/decoder. For the AE the encoder ends in a dense
/// bottleneck; the VAE replaces it with two dense heads (mu, logvar).
template <typename T = float>
struct EncoderDecoderModel {
    ModelKind kind = ModelKind::Ae;
    Shape input_shape;                 // [D,H,W]
    std::size_t latent_dim = 64;
    double beta = 1e-3;                // KL weight (vae)
    std::vector<Layer<T>> encoder;     // convs + relus + flatten (+ dense for ae)
    Layer<T> mu_head, logvar_head;     // vae only
    std::vector<Layer<T>> decoder;

    /// Canonical parameter order: encoder, heads, decoder.
    std::vector<Layer<T>*> layers() {
        std::vector<Layer<T>*> out;
        for (auto& l : encoder) out.push_back(&l);
        if (kind == ModelKind::Vae) {
            out.push_back(&mu_head);
            out.push_back(&logvar_head);
        }
        for (auto& l : decoder) out.push_back(&l);
        return out;
    }

    std::uint64_t checksum() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        const auto mix = [&](const Tensor<T>& t) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const float f = static_cast<float>(t[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                h = (h ^ bits) * 0x100000001b3ull;
            }
        };
        for (Layer<T>* l : layers()) {
            mix(l->weights);
            mix(l->bias);
        }
        return h;
    }
};

/// 3 stride-2 conv stages (channels base, 2*base, 4*base), dense bottleneck,
/// mirrored transposed-conv decoder ending in a sigmoid.
template <typename T = float>
EncoderDecoderModel<T> build_model(ModelKind kind, const Shape& input_shape, std::size_t latent_dim,
                                   Rng& rng, std::size_t base_channels = 8, double beta = 1e-3) {
    if (input_shape.size() != 3) throw DimensionError("model input must be 3D");
    for (std::size_t e : input_shape)
        if (e < 8 || (e & (e - 1)) != 0)
            throw DimensionError("input extents must be powers of two >= 8, got " + shape_str(input_shape));

    const std::size_t c1 = base_channels, c2 = 2 * base_channels, c3 = 4 * base_channels;
    const std::size_t d = input_shape[0] / 8, h = input_shape[1] / 8, w = input_shape[2] / 8;
    const std::size_t flat = c3 * d * h * w;

    EncoderDecoderModel<T> m;
    m.kind = kind;
    m.input_shape = input_shape;
    m.latent_dim = latent_dim;
    m.beta = beta;

    m.encoder.push_back(make_conv3d<T>(c1, 1, 3, 2, 1, rng));
    m.encoder.push_back(make_activation<T>(LayerKind::Relu));
    m.encoder.push_back(make_conv3d<T>(c2, c1, 3, 2, 1, rng));
    m.encoder.push_back(make_activation<T>(LayerKind::Relu));
    m.encoder.push_back(make_conv3d<T>(c3, c2, 3, 2, 1, rng));
    m.encoder.push_back(make_activation<T>(LayerKind::Relu));
    m.encoder.push_back(make_activation<T>(LayerKind::Flatten));
    if (kind == ModelKind::Ae) {
        m.encoder.push_back(make_dense<T>(latent_dim, flat, rng));
    } else {
        m.mu_head = make_dense<T>(latent_dim, flat, rng);
        m.logvar_head = make_dense<T>(latent_dim, flat, rng);
    }

    m.decoder.push_back(make_dense<T>(flat, latent_dim, rng));
    m.decoder.push_back(make_activation<T>(LayerKind::Relu));
    m.decoder.push_back(make_reshape<T>(Shape{c3, d, h, w}));
    m.decoder.push_back(make_conv_transpose3d<T>(c3, c2, 3, 2, 1, 1, rng));
    m.decoder.push_back(make_activation<T>(LayerKind::Relu));
    m.decoder.push_back(make_conv_transpose3d<T>(c2, c1, 3, 2, 1, 1, rng));
    m.decoder.push_back(make_activation<T>(LayerKind::Relu));
    m.decoder.push_back(make_conv_transpose3d<T>(c1, 1, 3, 2, 1, 1, rng));
    m.decoder.push_back(make_activation<T>(LayerKind::Sigmoid));
    return m;
}

/// z = mu + exp(logvar/2) * eps. Pass eps explicitly to pin the noise.
template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, const Tensor<T>& eps) {
    dist.mu.require_same_shape(dist.logvar);
    dist.mu.require_same_shape(eps);
    Tensor<T> z(dist.mu.shape());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = dist.mu[i] + static_cast<T>(std::exp(0.5 * static_cast<double>(dist.logvar[i]))) * eps[i];
    return z;
}

template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, Rng& rng) {
    return reparameterize(dist, gaussian_sample<T>(rng, dist.mu.shape(), 0.0, 1.0));
}

/// Gradient accumulators aligned with EncoderDecoderModel::layers() order.
template <typename T>
struct ModelGrads {
    std::vector<Tensor<T>> enc_w, enc_b;
    Tensor<T> mu_w, mu_b, lv_w, lv_b;
    std::vector<Tensor<T>> dec_w, dec_b;

    static ModelGrads shaped_like(EncoderDecoderModel<T>& m) {
        ModelGrads g;
        for (auto& l : m.encoder) {
            g.enc_w.push_back(Tensor<T>(l.weights.shape()));
            g.enc_b.push_back(Tensor<T>(l.bias.shape()));
        }
        if (m.kind == ModelKind::Vae) {
            g.mu_w = Tensor<T>(m.mu_head.weights.shape());
            g.mu_b = Tensor<T>(m.mu_head.bias.shape());
            g.lv_w = Tensor<T>(m.logvar_head.weights.shape());
            g.lv_b = Tensor<T>(m.logvar_head.bias.shape());
        }
        for (auto& l : m.decoder) {
            g.dec_w.push_back(Tensor<T>(l.weights.shape()));
            g.dec_b.push_back(Tensor<T>(l.bias.shape()));
        }
        return g;
    }

    void zero() {
        for (auto& t : enc_w) t.fill(0);
        for (auto& t : enc_b) t.fill(0);
        mu_w.fill(0); mu_b.fill(0); lv_w.fill(0); lv_b.fill(0);
        for (auto& t : dec_w) t.fill(0);
        for (auto& t : dec_b) t.fill(0);
    }

    void scale(T s) {
        for (auto& t : enc_w) t *= s;
        for (auto& t : enc_b) t *= s;
        mu_w *= s; mu_b *= s; lv_w *= s; lv_b *= s;
        for (auto& t : dec_w) t *= s;
        for (auto& t : dec_b) t *= s;
    }

    /// Aligned with model.layers().
    std::vector<std::pair<Tensor<T>*, Tensor<T>*>> flat(EncoderDecoderModel<T>& m) {
        std::vector<std::pair<Tensor<T>*, Tensor<T>*>> out;
        for (std::size_t i = 0; i < enc_w.size(); ++i) out.push_back({&enc_w[i], &enc_b[i]});
        if (m.kind == ModelKind::Vae) {
            out.push_back({&mu_w, &mu_b});
            out.push_back({&lv_w, &lv_b});
        }
        for (std::size_t i = 0; i < dec_w.size(); ++i) out.push_back({&dec_w[i], &dec_b[i]});
        return out;
    }
};

template <typename T>
struct LossParts {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

/// One item's loss; accumulates parameter gradients when `grads` is given.
/// For the VAE, `eps` supplies the reparameterization noise (fixed noise
/// makes the loss a deterministic function of the parameters).
template <typename T>
LossParts<T> model_item_loss(EncoderDecoderModel<T>& m, const Tensor<T>& x_chw,
                             const Tensor<T>* eps, ModelGrads<T>* grads) {
    LossParts<T> parts;
    const auto enc_acts = detail::chain_forward(m.encoder, x_chw);

    if (m.kind == ModelKind::Ae) {
        const Tensor<T>& z = enc_acts.back();
        const auto dec_acts = detail::chain_forward(m.decoder, z);
        auto [loss, grad] = mse_loss(dec_acts.back(), x_chw);
        parts.recon = loss;
        parts.total = loss;
        if (grads) {
            Tensor<T> gz = detail::chain_backward(m.decoder, dec_acts, std::move(grad), &grads->dec_w, &grads->dec_b);
            detail::chain_backward(m.encoder, enc_acts, std::move(gz), &grads->enc_w, &grads->enc_b);
        }
        return parts;
    }

    // VAE path
    const Tensor<T>& h = enc_acts.back();
    Tensor<T> mu = m.mu_head.forward(h);
    Tensor<T> logvar = m.logvar_head.forward(h);
    if (!eps) throw ParameterError("vae loss needs eps");
    Tensor<T> z = reparameterize(LatentDistribution<T>{mu, logvar}, *eps);

    const auto dec_acts = detail::chain_forward(m.decoder, z);
    auto [rloss, rgrad] = mse_loss(dec_acts.back(), x_chw);
    auto kl = kl_divergence(mu, logvar);
    parts.recon = rloss;
    parts.kl = kl.loss;
    parts.total = rloss + m.beta * kl.loss;

    if (grads) {
        Tensor<T> gz = detail::chain_backward(m.decoder, dec_acts, std::move(rgrad), &grads->dec_w, &grads->dec_b);
        Tensor<T> gmu(mu.shape()), glv(logvar.shape());
        for (std::size_t i = 0; i < gmu.size(); ++i) {
            gmu[i] = gz[i] + static_cast<T>(m.beta) * kl.grad_mu[i];
            glv[i] = static_cast<T>(0.5 * std::exp(0.5 * static_cast<double>(logvar[i]))) * (*eps)[i] * gz[i] +
                     static_cast<T>(m.beta) * kl.grad_logvar[i];
        }
        auto gmu_h = dense_backward(h, m.mu_head.weights, gmu);
        auto glv_h = dense_backward(h, m.logvar_head.weights, glv);
        grads->mu_w += gmu_h.grad_weights;
        grads->mu_b += gmu_h.grad_bias;
        grads->lv_w += glv_h.grad_weights;
        grads->lv_b += glv_h.grad_bias;
        Tensor<T> gh = gmu_h.grad_input;
        gh += glv_h.grad_input;
        detail::chain_backward(m.encoder, enc_acts, std::move(gh), &grads->enc_w, &grads->enc_b);
    }
    return parts;
}

struct TrainConfig {
    std::size_t epochs = 15;
    std::size_t batch_size = 8;
    double lr = 1e-3;
};

struct TrainReport {
    std::vector<double> total_loss;   // per epoch, mean per item
    std::vector<double> recon_loss;
    std::vector<double> kl_loss;
    double wall_seconds = 0.0;
    std::uint64_t final_checksum = 0;
};

template <typename T>
Tensor<T> volume_as_input(const Volume& v) {
    const Shape& s = v.data.shape();
    Tensor<T> x = v.data.template cast<T>();
    return x.reshape(Shape{1, s[0], s[1], s[2]});
}

/// Minibatch Adam over reconstruction MSE (+ beta*KL for the VAE).
/// Epoch order, init and VAE noise all derive from `rng`.
template <typename T>
TrainReport train(EncoderDecoderModel<T>& m, const LabeledDataset& ds, const TrainConfig& cfg, Rng& rng) {
    if (ds.items.empty()) throw ParameterError("empty dataset");
    for (const auto& [v, t] : ds.items)
        if (v.data.shape() != m.input_shape)
            throw DimensionError("volume " + v.id + " shape " + shape_str(v.data.shape()) +
                                 " vs model " + shape_str(m.input_shape));

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Tensor<T>> inputs;
    inputs.reserve(ds.items.size());
    for (const auto& [v, t] : ds.items) inputs.push_back(volume_as_input<T>(v));

    auto grads = ModelGrads<T>::shaped_like(m);
    auto layer_ptrs = m.layers();
    std::vector<AdamState<T>> opt_w, opt_b;
    for (Layer<T>* l : layer_ptrs) {
        opt_w.push_back(AdamState<T>::for_params(l->weights, cfg.lr));
        opt_b.push_back(AdamState<T>::for_params(l->bias, cfg.lr));
    }

    TrainReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(inputs.size(), rng);
        double etotal = 0.0, erecon = 0.0, ekl = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            for (std::size_t i = start; i < end; ++i) {
                LossParts<T> parts;
                if (m.kind == ModelKind::Vae) {
                    Tensor<T> eps = gaussian_sample<T>(rng, Shape{m.latent_dim}, 0.0, 1.0);
                    parts = model_item_loss(m, inputs[order[i]], &eps, &grads);
                } else {
                    parts = model_item_loss(m, inputs[order[i]], static_cast<const Tensor<T>*>(nullptr), &grads);
                }
                etotal += parts.total;
                erecon += parts.recon;
                ekl += parts.kl;
            }
            grads.scale(static_cast<T>(1.0 / static_cast<double>(end - start)));
            auto flat = grads.flat(m);
            for (std::size_t li = 0; li < layer_ptrs.size(); ++li) {
                if (!layer_ptrs[li]->has_params()) continue;
                adam_step(layer_ptrs[li]->weights, *flat[li].first, opt_w[li]);
                adam_step(layer_ptrs[li]->bias, *flat[li].second, opt_b[li]);
            }
        }
        const double n = static_cast<double>(inputs.size());
        if (!std::isfinite(etotal))
            throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        report.total_loss.push_back(etotal / n);
        report.recon_loss.push_back(erecon / n);
        report.kl_loss.push_back(ekl / n);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.final_checksum = m.checksum();
    return report;
}

/// Latent features: AE bottleneck activations; VAE posterior mean (no
/// sampling at feature-extraction time).
template <typename T>
Tensor<T> encode(EncoderDecoderModel<T>& m, const Volume& v) {
    if (v.data.shape() != m.input_shape)
        throw DimensionError("encode: volume shape " + shape_str(v.data.shape()));
    Tensor<T> x = volume_as_input<T>(v);
    for (const auto& l : m.encoder) x = l.forward(x);
    if (m.kind == ModelKind::Vae) return m.mu_head.forward(x);
    return x;
}

template <typename T>
std::pair<Volume, double> reconstruct(EncoderDecoderModel<T>& m, const Volume& v) {
    Tensor<T> z = encode(m, v);
    for (const auto& l : m.decoder) z = l.forward(z);
    Tensor<T> x = volume_as_input<T>(v);
    const double mse = mse_loss(z, x).loss;
    Volume out = v;
    out.data = z.reshape(m.input_shape).template cast<float>();
    out.id = v.id + "_recon";
    return {std::move(out), mse};
}

// ---------------------------------------------------------------------------
// Checkpoints: parameter container + JSON manifest.
// ---------------------------------------------------------------------------

template <typename T>
void save_model(EncoderDecoderModel<T>& m, const std::filesystem::path& base,
                const nlohmann::json& extra = {}) {
    std::vector<Layer<T>> all;
    for (auto* l : m.layers()) all.push_back(*l);
    save_layers(base.string() + ".bin", all);

    nlohmann::json j;
    j["kind"] = model_kind_name(m.kind);
    j["latent_dim"] = m.latent_dim;
    j["beta"] = m.beta;
    j["input_shape"] = m.input_shape;
    j["encoder_layers"] = m.encoder.size();
    j["decoder_layers"] = m.decoder.size();
    if (!extra.is_null() && !extra.empty()) j["run"] = extra;
    std::ofstream f(base.string() + ".json");
    if (!f) throw IoError("cannot write " + base.string() + ".json");
    f << j.dump(2) << "\n";
}

template <typename T = float>
EncoderDecoderModel<T> load_model(const std::filesystem::path& base) {
    std::ifstream f(base.string() + ".json");
    if (!f) throw IoError("cannot open " + base.string() + ".json");
    nlohmann::json j = nlohmann::json::parse(f);

    EncoderDecoderModel<T> m;
    m.kind = model_kind_from_name(j.at("kind").get<std::string>());
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    m.beta = j.at("beta").get<double>();
    m.input_shape = j.at("input_shape").get<Shape>();
    const std::size_t ne = j.at("encoder_layers").get<std::size_t>();
    const std::size_t nd = j.at("decoder_layers").get<std::size_t>();

    auto all = load_layers<T>(base.string() + ".bin");
    const std::size_t heads = m.kind == ModelKind::Vae ? 2 : 0;
    if (all.size() != ne + heads + nd)
        throw CorruptionError("layer count mismatch in " + base.string() + ".bin");
    std::size_t i = 0;
    for (; i < ne; ++i) m.encoder.push_back(std::move(all[i]));
    if (m.kind == ModelKind::Vae) {
        m.mu_head = std::move(all[i++]);
        m.logvar_head = std::move(all[i++]);
    }
    for (; i < all.size(); ++i) m.decoder.push_back(std::move(all[i]));
    return m;
}

} // namespace volreg
