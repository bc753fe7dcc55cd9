#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace kseg::nn {

using Shape5 = std::array<int, 5>; // (N, C, D, H, W)

inline size_t shape_numel(const Shape5& s) {
    return size_t(s[0]) * s[1] * s[2] * s[3] * s[4];
}

inline std::string shape_str(const Shape5& s) {
    std::string out = "(";
    for (int i = 0; i < 5; ++i) out += std::to_string(s[i]) + (i < 4 ? ", " : ")");
    return out;
}

/// Dense row-major activation tensor, always rank 5 (N, C, D, H, W).
template <typename T>
struct Tensor {
    Shape5 shape{0, 0, 0, 0, 0};
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(const Shape5& s) : shape(s), data(shape_numel(s), T(0)) {}
    Tensor(int n, int c, int d, int h, int w) : Tensor(Shape5{n, c, d, h, w}) {}

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int d() const { return shape[2]; }
    int h() const { return shape[3]; }
    int w() const { return shape[4]; }
    size_t numel() const { return data.size(); }
    size_t spatial() const { return size_t(shape[2]) * shape[3] * shape[4]; }
    size_t sample_stride() const { return size_t(shape[1]) * spatial(); }

    T* sample(int i) { return data.data() + size_t(i) * sample_stride(); }
    const T* sample(int i) const { return data.data() + size_t(i) * sample_stride(); }

    T& at(int n_, int c_, int d_, int h_, int w_) {
        return data[(((size_t(n_) * shape[1] + c_) * shape[2] + d_) * shape[3] + h_) * shape[4] + w_];
    }
    const T& at(int n_, int c_, int d_, int h_, int w_) const {
        return data[(((size_t(n_) * shape[1] + c_) * shape[2] + d_) * shape[3] + h_) * shape[4] + w_];
    }

    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

/// Trainable parameter: flat storage plus logical dims for serialization.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> dims;
    std::vector<T> value;
    std::vector<T> grad;

    size_t numel() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

} // namespace kseg::nn
