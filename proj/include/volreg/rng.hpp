#pragma once

#include <cmath>
#include <cstdint>

#include "volreg/errors.hpp"
#include "volreg/tensor.hpp"

namespace volreg {

/// Seedable 64-bit generator. The stream is splitmix64 (Steele, Lea &
/// Flood 2014); normal draws use Box-Muller. Identical seed gives an
/// identical stream within one build. Cross-build bit-exactness is not
/// promised.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    /// Deterministic child stream from (current state, child_id).
    /// Distinct ids give independent streams; does not advance *this.
    Rng split(std::uint64_t child_id) const {
        std::uint64_t z = state_ + 0x9E3779B97F4A7C15ull * (child_id + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// i.i.d. N(mu, sigma^2) tensor; deterministic given the rng state.
template <typename T = float>
Tensor<T> gaussian_sample(Rng& rng, Shape shape, double mu, double sigma) {
    if (sigma < 0) throw ParameterError("gaussian_sample: sigma < 0");
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(mu + sigma * rng.normal());
    return t;
}

/// Seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace volreg
