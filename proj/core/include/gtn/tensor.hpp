#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gtn/errors.hpp"

namespace gtn {

// Dense n-dimensional array, row-major, 64-bit elements.
// Plain value type; safe to copy/move between threads.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<long>(data.size())) {
            throw ConfigError("tensor data length " + std::to_string(data.size()) +
                              " does not match shape product " + std::to_string(numel_of(shape)));
        }
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d <= 0) throw ConfigError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        long n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor full(std::vector<int> s, double v) {
        long n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::vector<double> d) {
        int n = static_cast<int>(d.size());
        return Tensor({n}, std::move(d));
    }

    long numel() const { return static_cast<long>(data.size()); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // [C,H,W] indexing for image-like tensors.
    double& at3(int c, int y, int x) {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    double at3(int c, int y, int x) const {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    // [R,C] indexing for matrices.
    double& at2(int r, int c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    double at2(int r, int c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }

    double max_abs_diff(const Tensor& o) const {
        double m = 0.0;
        for (size_t i = 0; i < data.size(); ++i) m = std::max(m, std::fabs(data[i] - o.data[i]));
        return m;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

} // namespace gtn
