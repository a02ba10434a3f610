#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slca {

// Dense tensor with up to 4 logical dimensions, stored flat in row-major
// order. Rank-4 tensors are activation maps [N, C, H, W]; lower ranks are
// used for weights and vectors. Trailing dims are padded with 1 so a single
// indexing scheme works everywhere.
template <typename T>
struct Tensor {
    std::vector<T> v;
    std::array<int, 4> d{1, 1, 1, 1};
    int rank = 0;

    Tensor() = default;

    static Tensor zeros(std::initializer_list<int> dims) {
        Tensor t;
        t.rank = static_cast<int>(dims.size());
        if (t.rank < 1 || t.rank > 4) throw std::invalid_argument("tensor rank must be 1..4");
        int i = 0;
        std::size_t total = 1;
        for (int x : dims) {
            if (x < 1) throw std::invalid_argument("tensor dims must be >= 1");
            t.d[i++] = x;
            total *= static_cast<std::size_t>(x);
        }
        t.v.assign(total, T(0));
        return t;
    }
    static Tensor zeros4(int n, int c, int h, int w) { return zeros({n, c, h, w}); }
    static Tensor zeros2(int n, int k) { return zeros({n, k}); }
    static Tensor zeros1(int n) { return zeros({n}); }

    static Tensor full(std::initializer_list<int> dims, T value) {
        Tensor t = zeros(dims);
        for (auto& x : t.v) x = value;
        return t;
    }

    int n() const { return d[0]; }
    int c() const { return d[1]; }
    int h() const { return d[2]; }
    int w() const { return d[3]; }

    std::size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int i0, int i1, int i2, int i3) {
        return v[((static_cast<std::size_t>(i0) * d[1] + i1) * d[2] + i2) * d[3] + i3];
    }
    T at(int i0, int i1, int i2, int i3) const {
        return v[((static_cast<std::size_t>(i0) * d[1] + i1) * d[2] + i2) * d[3] + i3];
    }
    T& at(int i0, int i1) { return v[static_cast<std::size_t>(i0) * d[1] * d[2] * d[3] + i1]; }
    T at(int i0, int i1) const { return v[static_cast<std::size_t>(i0) * d[1] * d[2] * d[3] + i1]; }
    T& at(int i0) { return v[static_cast<std::size_t>(i0)]; }

    // Pointer to the [H, W] plane of image i0, channel i1.
    T* plane(int i0, int i1) {
        return v.data() + (static_cast<std::size_t>(i0) * d[1] + i1) * d[2] * d[3];
    }
    const T* plane(int i0, int i1) const {
        return v.data() + (static_cast<std::size_t>(i0) * d[1] + i1) * d[2] * d[3];
    }

    bool same_shape(const Tensor& o) const { return rank == o.rank && d == o.d; }

    void fill(T value) {
        for (auto& x : v) x = value;
    }
    void zero() { fill(T(0)); }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (int i = 0; i < rank; ++i) {
            if (i) s += ", ";
            s += std::to_string(d[i]);
        }
        return s + "]";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.rank = rank;
        t.d = d;
        t.v.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) t.v[i] = static_cast<U>(v[i]);
        return t;
    }
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    assert(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

}  // namespace slca
