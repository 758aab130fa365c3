#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "volreg/errors.hpp"

namespace volreg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Dense row-major strided N-d array. Always contiguous; strides are
/// derived from the shape and kept so indexing stays explicit.
template <typename T = float>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        compute_strides();
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        if (t.data_.size() != shape_numel(t.shape_))
            throw DimensionError("data length " + std::to_string(t.data_.size()) +
                                 " does not match shape " + shape_str(t.shape_));
        t.compute_strides();
        return t;
    }

    const Shape& shape() const { return shape_; }
    const std::vector<std::size_t>& strides() const { return strides_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Ix>
    T& operator()(Ix... ix) { return data_[offset({static_cast<std::size_t>(ix)...})]; }

    template <typename... Ix>
    const T& operator()(Ix... ix) const { return data_[offset({static_cast<std::size_t>(ix)...})]; }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        std::size_t off = 0, axis = 0;
        for (std::size_t i : idx) off += i * strides_[axis++];
        return off;
    }

    /// Same buffer, new shape. Element count must match.
    Tensor reshape(Shape s) const {
        if (shape_numel(s) != data_.size())
            throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t;
        t.shape_ = std::move(s);
        t.data_ = data_;
        t.compute_strides();
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) v[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from(shape_, std::move(v));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(T s) {
        for (auto& x : data_) x *= s;
        return *this;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void require_same_shape(const Tensor& o) const {
        if (shape_ != o.shape_)
            throw DimensionError("shape " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    }

private:
    void compute_strides() {
        strides_.assign(shape_.size(), 1);
        for (std::size_t i = shape_.size(); i-- > 1;)
            strides_[i - 1] = strides_[i] * shape_[i];
    }

    Shape shape_;
    std::vector<std::size_t> strides_;
    std::vector<T> data_;
};

/// c[i,j] = sum_k a[i,k] * b[k,j]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul needs rank-2 operands");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul inner extents " + std::to_string(k) + " vs " + std::to_string(k2));
    Tensor<T> c(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a(i, p);
            for (std::size_t j = 0; j < n; ++j) c(i, j) += aip * b(p, j);
        }
    return c;
}

} // namespace volreg
