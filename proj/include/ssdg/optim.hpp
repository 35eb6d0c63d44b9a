#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;

    void validate() const {
        require(lr >= 0.0, "adamw: negative learning rate");
        require(beta1 >= 0.0 && beta1 < 1.0, "adamw: beta1 out of [0,1)");
        require(beta2 >= 0.0 && beta2 < 1.0, "adamw: beta2 out of [0,1)");
        require(eps > 0.0, "adamw: eps must be positive");
        require(weight_decay >= 0.0, "adamw: negative weight decay");
    }
};

struct AdamWState {
    Vec m;  // first moment
    Vec v;  // second moment
    std::uint64_t t = 0;

    explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
// The decay multiplies the pre-step parameter value.
inline void adamw_step(std::vector<double*>& params, const Vec& grads,
                       AdamWState& state, const AdamWConfig& cfg) {
    cfg.validate();
    require(params.size() == grads.size(), "adamw: param/grad size mismatch");
    require(state.m.size() == params.size() && state.v.size() == params.size(),
            "adamw: state size mismatch");
    for (double g : grads)
        require(std::isfinite(g), "adamw: non-finite gradient");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        const double p = *params[i];
        *params[i] = p - cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                                   cfg.weight_decay * p);
    }
}

// Half-cosine decay from lr0 at t=0 to lr_min at t=T (endpoints included).
inline double cosine_lr(std::uint64_t t, std::uint64_t T, double lr0, double lr_min) {
    require(T >= 1, "cosine_lr: horizon must be at least 1");
    require(t <= T, "cosine_lr: step beyond horizon");
    const double frac = static_cast<double>(t) / static_cast<double>(T);
    const double pi = 3.14159265358979323846;
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(pi * frac));
}

}  // namespace ssdg
