#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssdg {

// Shortest round-trip decimal form, locale-independent ('.' decimal point).
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Dense row-major matrix of doubles. Rows index tokens throughout this
// library, columns index channels (or state dimensions).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }
};

// Rank-3 tensor, contiguous with index order (i, j, k) -> ((i*d1)+j)*d2+k.
struct Tensor3 {
    std::size_t d0 = 0, d1 = 0, d2 = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
        : d0(a), d1(b), d2(c), data(a * b * c, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * d1 + j) * d2 + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * d1 + j) * d2 + k];
    }

    double* slice(std::size_t i, std::size_t j) { return data.data() + (i * d1 + j) * d2; }
    const double* slice(std::size_t i, std::size_t j) const {
        return data.data() + (i * d1 + j) * d2;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }
};

using Vec = std::vector<double>;

// Sequence of L tokens, each a D-channel row.
using TokenSequence = Matrix;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Relative max-norm discrepancy between two same-shaped matrices.
inline double rel_error(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "rel_error: shape mismatch");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        diff = std::max(diff, std::fabs(a.data[i] - b.data[i]));
    double scale = std::max(a.max_abs(), b.max_abs());
    if (scale == 0.0) return 0.0;
    return diff / scale;
}

inline double rel_error(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "rel_error: size mismatch");
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::fabs(a[i] - b[i]));
        scale = std::max({scale, std::fabs(a[i]), std::fabs(b[i])});
    }
    if (scale == 0.0) return 0.0;
    return diff / scale;
}

// Kahan-compensated accumulator; kernel means must not depend on
// summation order beyond ~1e-10.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        double y = v - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

}  // namespace ssdg
