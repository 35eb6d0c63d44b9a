#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <string>

#include "ssdg/tensor.hpp"

namespace ssdg {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

enum class DiscretizeMode { zoh, euler };

// Below this |delta*A| the ZOH input weight switches to its second-order
// Taylor series; the direct (e^z - 1)/A form cancels catastrophically.
inline constexpr double kZohTaylorThreshold = 1e-6;

// Per-layer weights. A is parameterized as -exp(A_log) so that every entry
// stays strictly negative under unconstrained optimization.
struct SelectiveLayerParams {
    Matrix A_log;    // D x N
    Matrix W_B;      // D x N
    Vec b_B;         // N
    Matrix W_C;      // D x N
    Vec b_C;         // N
    Matrix W_delta;  // D x D
    Vec b_delta;     // D

    std::size_t channels() const { return A_log.rows; }
    std::size_t state_dim() const { return A_log.cols; }

    double A(std::size_t d, std::size_t n) const { return -std::exp(A_log(d, n)); }

    static SelectiveLayerParams zeros(std::size_t D, std::size_t N) {
        SelectiveLayerParams p;
        p.A_log = Matrix(D, N);
        p.W_B = Matrix(D, N);
        p.b_B = Vec(N, 0.0);
        p.W_C = Matrix(D, N);
        p.b_C = Vec(N, 0.0);
        p.W_delta = Matrix(D, D);
        p.b_delta = Vec(D, 0.0);
        return p;
    }

    void validate() const {
        const std::size_t D = channels(), N = state_dim();
        require(D >= 1 && N >= 1, "params: empty dimensions");
        require(W_B.rows == D && W_B.cols == N && W_C.rows == D && W_C.cols == N,
                "params: B/C projection shape mismatch");
        require(W_delta.rows == D && W_delta.cols == D, "params: delta projection shape mismatch");
        require(b_B.size() == N && b_C.size() == N && b_delta.size() == D,
                "params: bias shape mismatch");
        require(A_log.all_finite() && W_B.all_finite() && W_C.all_finite() &&
                    W_delta.all_finite(),
                "params: non-finite weight");
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t n = 0; n < N; ++n)
                require(A(d, n) < 0.0, "params: non-negative A entry");
    }
};

// Gradients of every field of SelectiveLayerParams, same shapes.
struct SelectiveLayerGrads {
    Matrix A_log;
    Matrix W_B;
    Vec b_B;
    Matrix W_C;
    Vec b_C;
    Matrix W_delta;
    Vec b_delta;

    static SelectiveLayerGrads zeros(std::size_t D, std::size_t N) {
        SelectiveLayerGrads g;
        g.A_log = Matrix(D, N);
        g.W_B = Matrix(D, N);
        g.b_B = Vec(N, 0.0);
        g.W_C = Matrix(D, N);
        g.b_C = Vec(N, 0.0);
        g.W_delta = Matrix(D, D);
        g.b_delta = Vec(D, 0.0);
        return g;
    }

    void scale(double s) {
        for (double& v : A_log.data) v *= s;
        for (double& v : W_B.data) v *= s;
        for (double& v : b_B) v *= s;
        for (double& v : W_C.data) v *= s;
        for (double& v : b_C) v *= s;
        for (double& v : W_delta.data) v *= s;
        for (double& v : b_delta) v *= s;
    }

    void accumulate(const SelectiveLayerGrads& o) {
        for (std::size_t i = 0; i < A_log.data.size(); ++i) A_log.data[i] += o.A_log.data[i];
        for (std::size_t i = 0; i < W_B.data.size(); ++i) W_B.data[i] += o.W_B.data[i];
        for (std::size_t i = 0; i < b_B.size(); ++i) b_B[i] += o.b_B[i];
        for (std::size_t i = 0; i < W_C.data.size(); ++i) W_C.data[i] += o.W_C.data[i];
        for (std::size_t i = 0; i < b_C.size(); ++i) b_C[i] += o.b_C[i];
        for (std::size_t i = 0; i < W_delta.data.size(); ++i)
            W_delta.data[i] += o.W_delta.data[i];
        for (std::size_t i = 0; i < b_delta.size(); ++i) b_delta[i] += o.b_delta[i];
    }
};

// The affine images of each token: delta_raw pre-softplus, B and C per token.
struct Projections {
    Matrix delta_raw;  // L x D
    Matrix B;          // L x N
    Matrix C;          // L x N
};

// Discrete operators plus the quantities later stages analyze: the
// post-softplus delta and the raw B projection ride along.
struct DiscretizedOperators {
    Tensor3 A_bar;  // L x D x N, per-token decay, in (0, 1)
    Tensor3 B_bar;  // L x D x N, per-token input weight
    Matrix C;       // L x N
    Matrix delta;   // L x D, strictly positive
    Matrix B;       // L x N
    DiscretizeMode mode = DiscretizeMode::zoh;

    std::size_t len() const { return delta.rows; }
    std::size_t channels() const { return delta.cols; }
    std::size_t state_dim() const { return C.cols; }
};

struct ScanCache {
    TokenSequence input;  // L x D
    DiscretizedOperators ops;
    Tensor3 hidden;       // L x D x N
    TokenSequence output; // L x D
};

// Lower-triangular data-dependent attention, one L x L block per channel.
struct AlphaMatrix {
    std::size_t channels = 0;
    std::size_t len = 0;
    Tensor3 values;  // D x L x L
};

inline Projections project_params(const TokenSequence& x, const SelectiveLayerParams& p) {
    p.validate();
    const std::size_t L = x.rows, D = p.channels(), N = p.state_dim();
    require(L >= 1, "project_params: empty sequence");
    require(x.cols == D, "project_params: channel count mismatch");
    require(x.all_finite(), "project_params: non-finite input");

    Projections out;
    out.delta_raw = Matrix(L, D);
    out.B = Matrix(L, N);
    out.C = Matrix(L, N);
    for (std::size_t t = 0; t < L; ++t) {
        const double* xt = x.row(t);
        for (std::size_t e = 0; e < D; ++e) {
            double acc = p.b_delta[e];
            for (std::size_t d = 0; d < D; ++d) acc += xt[d] * p.W_delta(d, e);
            out.delta_raw(t, e) = acc;
        }
        for (std::size_t n = 0; n < N; ++n) {
            double ab = p.b_B[n], ac = p.b_C[n];
            for (std::size_t d = 0; d < D; ++d) {
                ab += xt[d] * p.W_B(d, n);
                ac += xt[d] * p.W_C(d, n);
            }
            out.B(t, n) = ab;
            out.C(t, n) = ac;
        }
    }
    return out;
}

// ZOH input weight w such that B_bar = w * B, as a function of delta and A.
inline double zoh_input_weight(double delta, double A) {
    const double z = delta * A;
    if (std::fabs(z) < kZohTaylorThreshold)
        return delta * (1.0 + z * 0.5 + z * z / 6.0);
    return (std::exp(z) - 1.0) / A;
}

inline DiscretizedOperators discretize(const Matrix& delta_raw, const Matrix& B,
                                       const SelectiveLayerParams& p,
                                       DiscretizeMode mode = DiscretizeMode::zoh) {
    p.validate();
    const std::size_t L = delta_raw.rows, D = p.channels(), N = p.state_dim();
    require(delta_raw.cols == D, "discretize: delta_raw shape mismatch");
    require(B.rows == L && B.cols == N, "discretize: B shape mismatch");

    DiscretizedOperators ops;
    ops.mode = mode;
    ops.delta = Matrix(L, D);
    ops.B = B;
    ops.C = Matrix(L, N);
    ops.A_bar = Tensor3(L, D, N);
    ops.B_bar = Tensor3(L, D, N);
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t d = 0; d < D; ++d) {
            const double delta = softplus(delta_raw(t, d));
            ops.delta(t, d) = delta;
            for (std::size_t n = 0; n < N; ++n) {
                const double A = p.A(d, n);
                ops.A_bar(t, d, n) = std::exp(delta * A);
                const double w =
                    mode == DiscretizeMode::zoh ? zoh_input_weight(delta, A) : delta;
                ops.B_bar(t, d, n) = w * B(t, n);
            }
        }
    }
    return ops;
}

inline ScanCache scan_sequential(const DiscretizedOperators& ops, const TokenSequence& x) {
    const std::size_t L = ops.len(), D = ops.channels(), N = ops.state_dim();
    require(x.rows == L && x.cols == D, "scan: input shape mismatch");

    ScanCache cache;
    cache.input = x;
    cache.ops = ops;
    cache.hidden = Tensor3(L, D, N);
    cache.output = Matrix(L, D);
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t d = 0; d < D; ++d) {
            const double xt = x(t, d);
            const double* abar = ops.A_bar.slice(t, d);
            const double* bbar = ops.B_bar.slice(t, d);
            const double* hprev = t > 0 ? cache.hidden.slice(t - 1, d) : nullptr;
            double* h = cache.hidden.slice(t, d);
            double y = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                h[n] = (hprev ? abar[n] * hprev[n] : 0.0) + bbar[n] * xt;
                y += ops.C(t, n) * h[n];
            }
            if (!std::isfinite(y))
                throw std::runtime_error("scan: non-finite state at token " +
                                         std::to_string(t));
            cache.output(t, d) = y;
        }
    }
    return cache;
}

inline AlphaMatrix materialize_alpha(const DiscretizedOperators& ops,
                                     std::size_t max_len = 512) {
    const std::size_t L = ops.len(), D = ops.channels(), N = ops.state_dim();
    require(L <= max_len, "materialize_alpha: sequence length exceeds guard (" +
                              std::to_string(max_len) + ")");
    AlphaMatrix alpha;
    alpha.channels = D;
    alpha.len = L;
    alpha.values = Tensor3(D, L, L);
    Vec prod(N);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t n = 0; n < N; ++n) prod[n] = ops.B_bar(j, d, n);
            for (std::size_t i = j; i < L; ++i) {
                if (i > j)
                    for (std::size_t n = 0; n < N; ++n) prod[n] *= ops.A_bar(i, d, n);
                double v = 0.0;
                for (std::size_t n = 0; n < N; ++n) v += ops.C(i, n) * prod[n];
                alpha.values(d, i, j) = v;
            }
        }
    }
    return alpha;
}

// y = alpha x, applied per channel.
inline Matrix alpha_apply(const AlphaMatrix& alpha, const TokenSequence& x) {
    const std::size_t L = alpha.len, D = alpha.channels;
    require(x.rows == L && x.cols == D, "alpha_apply: shape mismatch");
    Matrix y(L, D);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t i = 0; i < L; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j <= i; ++j) acc += alpha.values(d, i, j) * x(j, d);
            y(i, d) = acc;
        }
    return y;
}

namespace detail {

// First-order recurrence scan element: h -> a*h + b.
struct ScanElem {
    double a;
    double b;
};

// Monoid concatenation, left operand earlier in time.
inline ScanElem scan_combine(const ScanElem& early, const ScanElem& late) {
    return {late.a * early.a, late.a * early.b + late.b};
}

}  // namespace detail

// Work-efficient Blelloch scan over the token axis, one independent series
// per (channel, state) pair. Matches scan_sequential to ~1e-10 relative;
// bitwise equality is not guaranteed (different association order).
inline ScanCache scan_parallel(const DiscretizedOperators& ops, const TokenSequence& x) {
    const std::size_t L = ops.len(), D = ops.channels(), N = ops.state_dim();
    require(x.rows == L && x.cols == D, "scan: input shape mismatch");

    ScanCache cache;
    cache.input = x;
    cache.ops = ops;
    cache.hidden = Tensor3(L, D, N);
    cache.output = Matrix(L, D);

    const std::size_t P = std::bit_ceil(L);
    std::vector<detail::ScanElem> e(P);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t t = 0; t < L; ++t)
                e[t] = {ops.A_bar(t, d, n), ops.B_bar(t, d, n) * x(t, d)};
            for (std::size_t t = L; t < P; ++t) e[t] = {1.0, 0.0};

            // up-sweep
            for (std::size_t len = 2; len <= P; len <<= 1)
                for (std::size_t start = 0; start < P; start += len) {
                    const std::size_t left = start + len / 2 - 1;
                    const std::size_t right = start + len - 1;
                    e[right] = detail::scan_combine(e[left], e[right]);
                }
            // down-sweep: e[t] becomes the exclusive prefix over [0, t)
            e[P - 1] = {1.0, 0.0};
            for (std::size_t len = P; len >= 2; len >>= 1)
                for (std::size_t start = 0; start < P; start += len) {
                    const std::size_t left = start + len / 2 - 1;
                    const std::size_t right = start + len - 1;
                    const detail::ScanElem leftv = e[left];
                    const detail::ScanElem prefix = e[right];
                    e[left] = prefix;
                    e[right] = detail::scan_combine(prefix, leftv);
                }
            // inclusive prefix applied to h_0 = 0 gives h_t directly
            for (std::size_t t = 0; t < L; ++t) {
                const detail::ScanElem inc = detail::scan_combine(
                    e[t], {ops.A_bar(t, d, n), ops.B_bar(t, d, n) * x(t, d)});
                cache.hidden(t, d, n) = inc.b;
            }
        }
    }
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t d = 0; d < D; ++d) {
            double y = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                y += ops.C(t, n) * cache.hidden(t, d, n);
            if (!std::isfinite(y))
                throw std::runtime_error("scan: non-finite state at token " +
                                         std::to_string(t));
            cache.output(t, d) = y;
        }
    return cache;
}

inline ScanCache s6_forward(const TokenSequence& x, const SelectiveLayerParams& p,
                            DiscretizeMode mode = DiscretizeMode::zoh) {
    Projections proj = project_params(x, p);
    DiscretizedOperators ops = discretize(proj.delta_raw, proj.B, p, mode);
    ops.C = proj.C;
    return scan_sequential(ops, x);
}

// Exact gradients of sum(dy . y) with respect to the input and every
// parameter field, via a reverse sweep of the recurrence.
inline Matrix s6_backward(const ScanCache& cache, const SelectiveLayerParams& p,
                          const Matrix& dy, SelectiveLayerGrads& dp) {
    const std::size_t L = cache.output.rows, D = cache.output.cols,
                      N = cache.ops.state_dim();
    require(dy.rows == L && dy.cols == D, "s6_backward: dy shape mismatch");
    require(p.channels() == D && p.state_dim() == N, "s6_backward: cache/params mismatch");
    require(cache.input.rows == L && cache.input.cols == D,
            "s6_backward: cache inconsistent");

    dp = SelectiveLayerGrads::zeros(D, N);
    Matrix dx(L, D);
    Matrix ddelta(L, D);
    Matrix dB(L, N);
    Matrix dC(L, N);
    Matrix dA(D, N);  // accumulated over tokens

    const DiscretizedOperators& ops = cache.ops;
    const bool zoh = ops.mode == DiscretizeMode::zoh;

    // lambda[d][n] holds the adjoint of h at token t while sweeping t down.
    Tensor3 lambda(D, 1, N);
    Tensor3 lambda_next(D, 1, N);
    for (std::size_t t = L; t-- > 0;) {
        for (std::size_t d = 0; d < D; ++d) {
            const double g = dy(t, d);
            const double xt = cache.input(t, d);
            const double delta = ops.delta(t, d);
            for (std::size_t n = 0; n < N; ++n) {
                double lam = ops.C(t, n) * g;
                if (t + 1 < L) lam += ops.A_bar(t + 1, d, n) * lambda_next(d, 0, n);
                lambda(d, 0, n) = lam;

                dC(t, n) += g * cache.hidden(t, d, n);
                const double hprev = t > 0 ? cache.hidden(t - 1, d, n) : 0.0;
                const double dAbar = lam * hprev;
                const double dBbar = lam * xt;
                dx(t, d) += lam * ops.B_bar(t, d, n);

                const double A = p.A(d, n);
                const double z = delta * A;
                const double abar = ops.A_bar(t, d, n);
                double dz = dAbar * abar;
                double dw;
                if (zoh) {
                    if (std::fabs(z) < kZohTaylorThreshold) {
                        const double s = 1.0 + z * 0.5 + z * z / 6.0;
                        const double sp = 0.5 + z / 3.0;
                        dw = dBbar * ops.B(t, n);
                        dz += dw * delta * sp;
                        ddelta(t, d) += dw * s;
                        dB(t, n) += dBbar * delta * s;
                    } else {
                        const double w = (abar - 1.0) / A;
                        dw = dBbar * ops.B(t, n);
                        dz += dw * abar / A;
                        dA(d, n) += -dw * w / A;
                        dB(t, n) += dBbar * w;
                    }
                } else {
                    dw = dBbar * ops.B(t, n);
                    ddelta(t, d) += dw;
                    dB(t, n) += dBbar * delta;
                }
                ddelta(t, d) += dz * A;
                dA(d, n) += dz * delta;
            }
        }
        std::swap(lambda, lambda_next);
    }

    // softplus: sigma(delta_raw) recovered from delta as 1 - exp(-delta)
    Matrix ddelta_raw(L, D);
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t d = 0; d < D; ++d)
            ddelta_raw(t, d) = ddelta(t, d) * (1.0 - std::exp(-ops.delta(t, d)));

    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t n = 0; n < N; ++n)
            dp.A_log(d, n) = dA(d, n) * p.A(d, n);

    for (std::size_t t = 0; t < L; ++t) {
        const double* xt = cache.input.row(t);
        for (std::size_t e = 0; e < D; ++e) {
            const double gr = ddelta_raw(t, e);
            dp.b_delta[e] += gr;
            for (std::size_t d = 0; d < D; ++d) {
                dp.W_delta(d, e) += xt[d] * gr;
                dx(t, d) += gr * p.W_delta(d, e);
            }
        }
        for (std::size_t n = 0; n < N; ++n) {
            const double gb = dB(t, n), gc = dC(t, n);
            dp.b_B[n] += gb;
            dp.b_C[n] += gc;
            for (std::size_t d = 0; d < D; ++d) {
                dp.W_B(d, n) += xt[d] * gb;
                dp.W_C(d, n) += xt[d] * gc;
                dx(t, d) += gb * p.W_B(d, n) + gc * p.W_C(d, n);
            }
        }
    }
    return dx;
}

}  // namespace ssdg
