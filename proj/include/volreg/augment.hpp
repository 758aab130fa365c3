#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "volreg/errors.hpp"
#include "volreg/fft.hpp"
#include "volreg/rng.hpp"
#include "volreg/volio.hpp"

namespace volreg {

namespace detail {

inline float clamp01(double v) {
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

/// Symmetric reflection for out-of-range sample indices.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= sn) {
        if (i < 0) i = -i - 1;
        if (i >= sn) i = 2 * sn - i - 1;
    }
    return static_cast<std::size_t>(i);
}

} // namespace detail

/// Per-transform parameter ranges. The magnitudes are artifact-strength
/// defaults, all overridable through the pipeline config.
struct AugmentConfig {
    std::array<double, 2> noise_sigma_range{0.0, 0.05};
    std::array<double, 2> gamma_log_range{std::log(0.7), std::log(1.5)};
    std::array<double, 2> blur_sigma_range{0.3, 1.2};
    std::size_t bias_order = 3;
    std::array<double, 2> bias_coeff_range{-0.3, 0.3};
    std::array<std::size_t, 2> spike_count_range{1, 3};
    std::array<double, 2> spike_intensity_range{1.0, 3.0};
    std::array<std::size_t, 2> ghost_count_range{2, 4};
    std::array<double, 2> ghost_intensity_range{0.2, 0.8};
    double motion_rot_max_deg = 10.0;
    double motion_trans_max = 3.0;
    std::size_t copies_per_volume = 1;
    double apply_probability = 0.5;

    void validate() const {
        const auto ordered = [](const std::array<double, 2>& r) { return r[0] <= r[1]; };
        if (!ordered(noise_sigma_range) || !ordered(gamma_log_range) || !ordered(blur_sigma_range) ||
            !ordered(bias_coeff_range) || !ordered(spike_intensity_range) || !ordered(ghost_intensity_range))
            throw ParameterError("augment range not ordered low <= high");
        if (spike_count_range[0] > spike_count_range[1] || ghost_count_range[0] > ghost_count_range[1])
            throw ParameterError("augment count range not ordered");
        if (noise_sigma_range[0] < 0 || blur_sigma_range[0] < 0 || spike_intensity_range[0] < 0 ||
            ghost_intensity_range[0] < 0)
            throw ParameterError("augment intensities must be non-negative");
        if (ghost_count_range[0] < 2) throw ParameterError("ghost count must be >= 2");
        if (motion_rot_max_deg < 0 || motion_trans_max < 0)
            throw ParameterError("motion limits must be non-negative");
        if (apply_probability < 0 || apply_probability > 1)
            throw ParameterError("apply_probability must be in [0,1]");
    }
};

// --------------------------------------------------------------------------
// 1. Random noise injection.
// --------------------------------------------------------------------------

inline Volume add_noise(const Volume& v, Rng& rng, double sigma) {
    if (sigma < 0) throw ParameterError("noise sigma < 0");
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = detail::clamp01(static_cast<double>(v.data[i]) + sigma * rng.normal());
    return out;
}

// --------------------------------------------------------------------------
// 2. Gamma adjustment: out = v^gamma on [0,1].
// --------------------------------------------------------------------------

inline Volume adjust_gamma(const Volume& v, double gamma) {
    if (!(gamma > 0)) throw ParameterError("gamma must be > 0");
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(std::pow(static_cast<double>(v.data[i]), gamma));
    return out;
}

// --------------------------------------------------------------------------
// 3. Gaussian blur: separable per axis, radius ceil(3*sigma), kernel
//    normalized to sum 1, reflect padding.
// --------------------------------------------------------------------------

inline Volume gaussian_blur(const Volume& v, double sigma) {
    if (sigma < 0) throw ParameterError("blur sigma < 0");
    if (sigma == 0) return v;

    const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    const Shape& s = v.data.shape();
    Volume out = v;
    Tensor<float> tmp(s);
    const std::size_t D = s[0], H = s[1], W = s[2];
    const auto pass = [&](const Tensor<float>& src, Tensor<float>& dst, int axis) {
        const std::size_t n = s[static_cast<std::size_t>(axis)];
        for (std::size_t z = 0; z < D; ++z)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                        std::size_t zz = z, yy = y, xx = x;
                        if (axis == 0) zz = detail::reflect_index(static_cast<std::ptrdiff_t>(z) + k, n);
                        else if (axis == 1) yy = detail::reflect_index(static_cast<std::ptrdiff_t>(y) + k, n);
                        else xx = detail::reflect_index(static_cast<std::ptrdiff_t>(x) + k, n);
                        acc += kernel[static_cast<std::size_t>(k + radius)] * src(zz, yy, xx);
                    }
                    dst(z, y, x) = static_cast<float>(acc);
                }
    };
    pass(out.data, tmp, 0);
    pass(tmp, out.data, 1);
    pass(out.data, tmp, 2);
    out.data = std::move(tmp);
    return out;
}

// --------------------------------------------------------------------------
// 4. Multiplicative bias field exp(P(x,y,z)), P a random polynomial of
//    total degree <= order in coordinates normalized to [-1,1].
// --------------------------------------------------------------------------

inline Volume apply_bias_field(const Volume& v, Rng& rng, std::size_t order,
                               std::array<double, 2> coeff_range) {
    std::vector<double> coeffs;
    for (std::size_t i = 0; i <= order; ++i)
        for (std::size_t j = 0; i + j <= order; ++j)
            for (std::size_t k = 0; i + j + k <= order; ++k)
                coeffs.push_back(rng.uniform(coeff_range[0], coeff_range[1]));

    const Shape& s = v.data.shape();
    const std::size_t D = s[0], H = s[1], W = s[2];
    const auto norm = [](std::size_t i, std::size_t n) {
        return n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
    };
    Volume out = v;
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double cz = norm(z, D), cy = norm(y, H), cx = norm(x, W);
                double p = 0.0;
                std::size_t ci = 0;
                for (std::size_t i = 0; i <= order; ++i)
                    for (std::size_t j = 0; i + j <= order; ++j)
                        for (std::size_t k = 0; i + j + k <= order; ++k)
                            p += coeffs[ci++] * std::pow(cz, static_cast<double>(i)) *
                                 std::pow(cy, static_cast<double>(j)) * std::pow(cx, static_cast<double>(k));
                out.data(z, y, x) = detail::clamp01(static_cast<double>(v.data(z, y, x)) * std::exp(p));
            }
    return out;
}

// --------------------------------------------------------------------------
// 5. k-space spikes: set `count` random non-DC coefficients to
//    intensity * max|K| with a random phase, then invert.
// --------------------------------------------------------------------------

inline Volume apply_spike(const Volume& v, Rng& rng, std::size_t count, double intensity) {
    auto k = fft3(ComplexVolume<float>::from_real(v.data));
    double maxmag = 0.0;
    for (std::size_t i = 0; i < k.re.size(); ++i)
        maxmag = std::max(maxmag, std::hypot(static_cast<double>(k.re[i]), static_cast<double>(k.im[i])));

    for (std::size_t n = 0; n < count; ++n) {
        std::size_t idx;
        do {
            idx = rng.below(k.re.size());
        } while (idx == 0);  // index 0 is DC
        const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        k.re[idx] = static_cast<float>(intensity * maxmag * std::cos(phase));
        k.im[idx] = static_cast<float>(intensity * maxmag * std::sin(phase));
    }

    auto back = fft3(k, true);
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = detail::clamp01(static_cast<double>(back.re[i]));
    return out;
}

// --------------------------------------------------------------------------
// 6. Ghosting: attenuate every num_ghosts-th k-space plane perpendicular
//    to `axis` (skipping DC) by (1 - intensity), giving displaced replicas.
// --------------------------------------------------------------------------

inline Volume apply_ghosting(const Volume& v, std::size_t num_ghosts, std::size_t axis,
                             double intensity) {
    if (num_ghosts < 2) throw ParameterError("num_ghosts must be >= 2");
    if (intensity < 0 || intensity > 1) throw ParameterError("ghost intensity must be in [0,1]");
    if (axis > 2) throw ParameterError("axis must be 0, 1 or 2");

    auto k = fft3(ComplexVolume<float>::from_real(v.data));
    const Shape& s = k.shape();
    const float factor = static_cast<float>(1.0 - intensity);
    for (std::size_t z = 0; z < s[0]; ++z)
        for (std::size_t y = 0; y < s[1]; ++y)
            for (std::size_t x = 0; x < s[2]; ++x) {
                const std::size_t plane = axis == 0 ? z : axis == 1 ? y : x;
                if (plane != 0 && plane % num_ghosts == 0) {
                    k.re(z, y, x) *= factor;
                    k.im(z, y, x) *= factor;
                }
            }

    auto back = fft3(k, true);
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = detail::clamp01(static_cast<double>(back.re[i]));
    return out;
}

// --------------------------------------------------------------------------
// 7. Motion: average the volume with a rigidly transformed copy
//    (Euler rotations about the center, sub-voxel translation, trilinear
//    resampling with zero fill). Image-space approximation of motion
//    averaging.
// --------------------------------------------------------------------------

/// Resample v under the inverse of the rigid map p -> R(p-c)+c+t.
inline Volume resample_rigid(const Volume& v, const std::array<double, 3>& angles_rad,
                             const std::array<double, 3>& translation) {
    const Shape& s = v.data.shape();
    const std::size_t D = s[0], H = s[1], W = s[2];
    const double cz = (static_cast<double>(D) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;

    // Rotation matrix R = Rz * Ry * Rx over tensor axes (0,1,2).
    const double ca = std::cos(angles_rad[0]), sa = std::sin(angles_rad[0]);
    const double cb = std::cos(angles_rad[1]), sb = std::sin(angles_rad[1]);
    const double cg = std::cos(angles_rad[2]), sg = std::sin(angles_rad[2]);
    const double R[3][3] = {
        {cb * cg, cb * sg, -sb},
        {sa * sb * cg - ca * sg, sa * sb * sg + ca * cg, sa * cb},
        {ca * sb * cg + sa * sg, ca * sb * sg - sa * cg, ca * cb},
    };

    Volume out = v;
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                // inverse map: q = R^T (p - c - t) + c
                const double pz = static_cast<double>(z) - cz - translation[0];
                const double py = static_cast<double>(y) - cy - translation[1];
                const double px = static_cast<double>(x) - cx - translation[2];
                const double qz = R[0][0] * pz + R[1][0] * py + R[2][0] * px + cz;
                const double qy = R[0][1] * pz + R[1][1] * py + R[2][1] * px + cy;
                const double qx = R[0][2] * pz + R[1][2] * py + R[2][2] * px + cx;

                const double fz = std::floor(qz), fy = std::floor(qy), fx = std::floor(qx);
                const double wz = qz - fz, wy = qy - fy, wx = qx - fx;
                double acc = 0.0;
                for (int dz = 0; dz <= 1; ++dz)
                    for (int dy = 0; dy <= 1; ++dy)
                        for (int dx = 0; dx <= 1; ++dx) {
                            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(fz) + dz;
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(fy) + dy;
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(fx) + dx;
                            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D) || iy < 0 ||
                                iy >= static_cast<std::ptrdiff_t>(H) || ix < 0 ||
                                ix >= static_cast<std::ptrdiff_t>(W))
                                continue;  // zero fill
                            const double w = (dz ? wz : 1.0 - wz) * (dy ? wy : 1.0 - wy) * (dx ? wx : 1.0 - wx);
                            acc += w * v.data(static_cast<std::size_t>(iz), static_cast<std::size_t>(iy),
                                              static_cast<std::size_t>(ix));
                        }
                out.data(z, y, x) = static_cast<float>(acc);
            }
    return out;
}

inline Volume apply_motion(const Volume& v, Rng& rng, double rot_max_deg, double trans_max) {
    if (rot_max_deg < 0 || trans_max < 0) throw ParameterError("motion limits must be >= 0");
    const double to_rad = 3.14159265358979323846 / 180.0;
    const std::array<double, 3> angles{rng.uniform(-rot_max_deg, rot_max_deg) * to_rad,
                                       rng.uniform(-rot_max_deg, rot_max_deg) * to_rad,
                                       rng.uniform(-rot_max_deg, rot_max_deg) * to_rad};
    const std::array<double, 3> trans{rng.uniform(-trans_max, trans_max),
                                      rng.uniform(-trans_max, trans_max),
                                      rng.uniform(-trans_max, trans_max)};
    const Volume moved = resample_rigid(v, angles, trans);
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 0.5f * (v.data[i] + moved.data[i]);
    return out;
}

// --------------------------------------------------------------------------
// Composite: copies_per_volume outputs, each transform applied with
// probability apply_probability, fixed order
// motion -> ghosting -> spike -> bias -> blur -> noise -> gamma.
// --------------------------------------------------------------------------

inline std::vector<Volume> augment_volume(const Volume& v, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<Volume> out;
    out.reserve(cfg.copies_per_volume);
    for (std::size_t copy = 0; copy < cfg.copies_per_volume; ++copy) {
        Rng r = rng.split(copy);
        Volume cur = v;
        const auto flip = [&] { return r.uniform() < cfg.apply_probability; };

        if (flip()) cur = apply_motion(cur, r, cfg.motion_rot_max_deg, cfg.motion_trans_max);
        if (flip()) {
            const std::size_t g = cfg.ghost_count_range[0] +
                                  r.below(cfg.ghost_count_range[1] - cfg.ghost_count_range[0] + 1);
            const std::size_t axis = r.below(3);
            cur = apply_ghosting(cur, g, axis, r.uniform(cfg.ghost_intensity_range[0], cfg.ghost_intensity_range[1]));
        }
        if (flip()) {
            const std::size_t n = cfg.spike_count_range[0] +
                                  r.below(cfg.spike_count_range[1] - cfg.spike_count_range[0] + 1);
            cur = apply_spike(cur, r, n, r.uniform(cfg.spike_intensity_range[0], cfg.spike_intensity_range[1]));
        }
        if (flip()) cur = apply_bias_field(cur, r, cfg.bias_order, cfg.bias_coeff_range);
        if (flip()) cur = gaussian_blur(cur, r.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1]));
        if (flip()) cur = add_noise(cur, r, r.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]));
        if (flip()) cur = adjust_gamma(cur, std::exp(r.uniform(cfg.gamma_log_range[0], cfg.gamma_log_range[1])));

        cur.id = v.id + "_aug" + std::to_string(copy);
        out.push_back(std::move(cur));
    }
    return out;
}

} // namespace volreg
