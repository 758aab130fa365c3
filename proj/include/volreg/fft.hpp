#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "volreg/errors.hpp"
#include "volreg/tensor.hpp"

namespace volreg {

/// 3D complex field as a pair of same-shape real tensors.
template <typename T = float>
struct ComplexVolume {
    Tensor<T> re;
    Tensor<T> im;

    ComplexVolume() = default;
    ComplexVolume(Tensor<T> r, Tensor<T> i) : re(std::move(r)), im(std::move(i)) {
        re.require_same_shape(im);
    }

    static ComplexVolume from_real(const Tensor<T>& r) {
        return ComplexVolume(r, Tensor<T>(r.shape()));
    }

    const Shape& shape() const { return re.shape(); }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 Cooley-Tukey. Unnormalized; conjugate
/// twiddles for the inverse.
inline void fft1(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / static_cast<double>(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

} // namespace detail

/// Separable radix-2 3D DFT. Forward is unnormalized; the inverse carries
/// the full 1/N so fft3(fft3(v), true) == v. Extents must be powers of two.
template <typename T>
ComplexVolume<T> fft3(const ComplexVolume<T>& v, bool inverse = false) {
    const Shape& s = v.shape();
    if (s.size() != 3) throw DimensionError("fft3 needs a 3D volume");
    for (std::size_t e : s)
        if (!detail::is_pow2(e))
            throw UnsupportedError("fft3 extent " + std::to_string(e) + " is not a power of two");

    const std::size_t D = s[0], H = s[1], W = s[2];
    std::vector<std::complex<double>> buf(v.re.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = {static_cast<double>(v.re[i]), static_cast<double>(v.im[i])};

    std::vector<std::complex<double>> line;
    // axis 2 (contiguous)
    line.resize(W);
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y) {
            std::complex<double>* p = buf.data() + (z * H + y) * W;
            line.assign(p, p + W);
            detail::fft1(line, inverse);
            std::copy(line.begin(), line.end(), p);
        }
    // axis 1
    line.resize(H);
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t y = 0; y < H; ++y) line[y] = buf[(z * H + y) * W + x];
            detail::fft1(line, inverse);
            for (std::size_t y = 0; y < H; ++y) buf[(z * H + y) * W + x] = line[y];
        }
    // axis 0
    line.resize(D);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t z = 0; z < D; ++z) line[z] = buf[(z * H + y) * W + x];
            detail::fft1(line, inverse);
            for (std::size_t z = 0; z < D; ++z) buf[(z * H + y) * W + x] = line[z];
        }

    double scale = inverse ? 1.0 / static_cast<double>(D * H * W) : 1.0;
    ComplexVolume<T> out{Tensor<T>(s), Tensor<T>(s)};
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re[i] = static_cast<T>(buf[i].real() * scale);
        out.im[i] = static_cast<T>(buf[i].imag() * scale);
    }
    return out;
}

} // namespace volreg
