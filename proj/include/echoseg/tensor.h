#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "echoseg/errors.h"

namespace echoseg {

// NCHW shape. Every activation in the network is 4-D.
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }

    friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

template <typename T>
class BasicTensor {
public:
    BasicTensor() = default;
    explicit BasicTensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
    BasicTensor(int n, int c, int h, int w, T fill = T(0)) : BasicTensor(Shape4{n, c, h, w}, fill) {}

    const Shape4& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    T operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // One sample (C*H*W contiguous values).
    std::span<T> sample(int n) { return {data_.data() + n * shape_.sample(), shape_.sample()}; }
    std::span<const T> sample(int n) const { return {data_.data() + n * shape_.sample(), shape_.sample()}; }
    // One channel plane of one sample.
    std::span<T> plane(int n, int c) { return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()}; }
    std::span<const T> plane(int n, int c) const {
        return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    BasicTensor<U> cast() const {
        BasicTensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape4 shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
    if (!(a == b)) throw ValidationError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace echoseg
