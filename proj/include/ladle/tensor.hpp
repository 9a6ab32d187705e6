#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ladle/common.hpp"

namespace ladle {

// Dense row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
struct Tensor {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> d;

    Tensor() = default;
    Tensor(size_t r, size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

    static Tensor zeros(size_t r, size_t c) { return Tensor(r, c); }

    static Tensor full(size_t r, size_t c, double v) {
        Tensor t(r, c);
        std::fill(t.d.begin(), t.d.end(), v);
        return t;
    }

    static Tensor randn(size_t r, size_t c, Rng& rng, double stddev = 1.0) {
        Tensor t(r, c);
        for (auto& x : t.d) x = rng.normal() * stddev;
        return t;
    }

    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.rows = 1;
        t.cols = v.size();
        t.d = std::move(v);
        return t;
    }

    size_t numel() const { return rows * cols; }
    bool empty() const { return d.empty(); }

    double& at(size_t r, size_t c) { return d[r * cols + c]; }
    double at(size_t r, size_t c) const { return d[r * cols + c]; }

    double* ptr(size_t r = 0) { return d.data() + r * cols; }
    const double* ptr(size_t r = 0) const { return d.data() + r * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(d.begin(), d.end(), v); }

    bool all_finite() const {
        for (double x : d)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double squared_norm() const {
        double s = 0.0;
        for (double x : d) s += x * x;
        return s;
    }

    double norm() const { return std::sqrt(squared_norm()); }
};

inline uint64_t hash_tensor(const Tensor& t, uint64_t h = 0xcbf29ce484222325ull) {
    h = fnv1a64(&t.rows, sizeof(t.rows), h);
    h = fnv1a64(&t.cols, sizeof(t.cols), h);
    return fnv1a64(t.d.data(), t.d.size() * sizeof(double), h);
}

}  // namespace ladle
