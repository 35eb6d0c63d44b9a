#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double gaussian_kernel(const Vec& a, const Vec& b, double gamma) {
    require(gamma > 0.0, "gaussian_kernel: gamma must be positive");
    require(a.size() == b.size(), "gaussian_kernel: length mismatch");
    return std::exp(-squared_distance(a.data(), b.data(), a.size()) / gamma);
}

namespace detail {

// rows of X and Y are samples; V-statistic means include the diagonal
inline double kernel_mean_within(const Matrix& X, double gamma) {
    KahanSum s;
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.rows; ++j)
            s.add(std::exp(-squared_distance(X.row(i), X.row(j), X.cols) / gamma));
    return s.value() / (static_cast<double>(X.rows) * static_cast<double>(X.rows));
}

inline double kernel_mean_between(const Matrix& X, const Matrix& Y, double gamma) {
    KahanSum s;
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < Y.rows; ++j)
            s.add(std::exp(-squared_distance(X.row(i), Y.row(j), X.cols) / gamma));
    return s.value() / (static_cast<double>(X.rows) * static_cast<double>(Y.rows));
}

// Any total order works here; it only pins a canonical argument order so
// that mmd2(X, Y) and mmd2(Y, X) run the exact same float operations.
inline bool canonical_before(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) return a.rows < b.rows;
    if (a.cols != b.cols) return a.cols < b.cols;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) <= 0;
}

}  // namespace detail

// Biased V-statistic estimate of squared MMD under the Gaussian kernel,
// clamped at zero from below. Exactly symmetric in its arguments.
inline double mmd2(const Matrix& X, const Matrix& Y, double gamma) {
    require(X.rows >= 1 && Y.rows >= 1, "mmd2: empty sample set");
    require(X.cols == Y.cols, "mmd2: dimension mismatch");
    require(gamma > 0.0, "mmd2: gamma must be positive");
    const bool xy = detail::canonical_before(X, Y);
    const Matrix& A = xy ? X : Y;
    const Matrix& B = xy ? Y : X;
    const double within = detail::kernel_mean_within(A, gamma) +
                          detail::kernel_mean_within(B, gamma);
    const double between = detail::kernel_mean_between(A, B, gamma);
    return std::max(0.0, within - 2.0 * between);
}

// One domain's empirical token distributions: M sequences of identical shape.
struct FeatureBank {
    std::string domain_id;
    std::vector<Matrix> samples;  // each L x D

    std::size_t size() const { return samples.size(); }
    std::size_t len() const { return samples.empty() ? 0 : samples[0].rows; }
    std::size_t dim() const { return samples.empty() ? 0 : samples[0].cols; }

    void validate() const {
        require(!samples.empty(), "FeatureBank: no samples");
        for (const auto& s : samples)
            require(s.rows == len() && s.cols == dim(),
                    "FeatureBank: inconsistent sample shapes");
    }

    // samples' token-t rows stacked into an M x D matrix
    Matrix tokens_at(std::size_t t) const {
        Matrix out(samples.size(), dim());
        for (std::size_t m = 0; m < samples.size(); ++m) {
            const double* src = samples[m].row(t);
            double* dst = out.row(m);
            for (std::size_t d = 0; d < dim(); ++d) dst[d] = src[d];
        }
        return out;
    }
};

struct GammaMode {
    bool use_median = true;
    double fixed_value = 1.0;

    static GammaMode median() { return {true, 1.0}; }
    static GammaMode fixed(double g) {
        require(g > 0.0, "GammaMode: fixed gamma must be positive");
        return {false, g};
    }
};

// Median pairwise squared distance over the pooled token vectors of both
// banks, strided down to at most `cap` vectors. Degenerate pools (all
// identical, or a single vector) fall back to 1.0.
inline double median_heuristic_gamma(const FeatureBank& S, const FeatureBank& T,
                                     std::size_t cap = 512) {
    S.validate();
    T.validate();
    require(S.dim() == T.dim(), "median_heuristic_gamma: dimension mismatch");
    require(cap >= 2, "median_heuristic_gamma: cap too small");
    std::vector<const double*> pool;
    const std::size_t total = (S.size() + T.size()) * S.len();
    const std::size_t stride = (total + cap - 1) / cap;
    std::size_t k = 0;
    for (const auto* bank : {&S, &T})
        for (const auto& s : bank->samples)
            for (std::size_t t = 0; t < s.rows; ++t, ++k)
                if (k % stride == 0) pool.push_back(s.row(t));
    if (pool.size() < 2) return 1.0;
    std::vector<double> d2;
    d2.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            d2.push_back(squared_distance(pool[i], pool[j], S.dim()));
    const std::size_t mid = d2.size() / 2;  // upper median for even counts
    std::nth_element(d2.begin(), d2.begin() + mid, d2.end());
    const double med = d2[mid];
    return med > 0.0 ? med : 1.0;
}

// Token-level MMD: squared MMD averaged over aligned token positions, one
// shared bandwidth per call. Pass gamma_used to record the resolved value.
inline double to_mmd(const FeatureBank& S, const FeatureBank& T, const GammaMode& mode,
                     double* gamma_used = nullptr) {
    S.validate();
    T.validate();
    require(S.len() == T.len() && S.dim() == T.dim(), "to_mmd: bank shape mismatch");
    const double gamma =
        mode.use_median ? median_heuristic_gamma(S, T) : mode.fixed_value;
    if (gamma_used) *gamma_used = gamma;
    KahanSum acc;
    for (std::size_t t = 0; t < S.len(); ++t)
        acc.add(mmd2(S.tokens_at(t), T.tokens_at(t), gamma));
    return acc.value() / static_cast<double>(S.len());
}

// Largest pairwise token-level gap across source domains.
inline double estimate_kappa_s(const std::vector<FeatureBank>& banks,
                               const GammaMode& mode) {
    require(banks.size() >= 2, "estimate_kappa_s: need at least two banks");
    double best = 0.0;
    for (std::size_t i = 0; i < banks.size(); ++i)
        for (std::size_t j = i + 1; j < banks.size(); ++j)
            best = std::max(best, to_mmd(banks[i], banks[j], mode));
    return best;
}

}  // namespace ssdg
