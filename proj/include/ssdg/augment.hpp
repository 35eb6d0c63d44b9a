#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ssdg/rng.hpp"
#include "ssdg/ssm.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

// Per-channel first/second moments of one sequence; sigma carries a 1e-6
// variance floor so degenerate (constant) channels stay usable.
struct StyleStats {
    Vec mu;
    Vec sigma;
};

inline constexpr double kStyleVarFloor = 1e-6;

inline StyleStats style_stats(const TokenSequence& x) {
    const std::size_t L = x.rows, D = x.cols;
    require(L >= 1, "style_stats: empty sequence");
    require(x.all_finite(), "style_stats: non-finite input");
    StyleStats s;
    s.mu.assign(D, 0.0);
    s.sigma.assign(D, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
        double m = 0.0;
        for (std::size_t t = 0; t < L; ++t) m += x(t, d);
        m /= static_cast<double>(L);
        double v = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
            const double c = x(t, d) - m;
            v += c * c;
        }
        v /= static_cast<double>(L);
        s.mu[d] = m;
        s.sigma[d] = std::sqrt(v + kStyleVarFloor);
    }
    return s;
}

// mask[t] != 0 means token t is replaced by its style-mixed version.
using SaliencyMask = std::vector<std::uint8_t>;

inline std::size_t mask_count(const SaliencyMask& m) {
    std::size_t c = 0;
    for (auto b : m) c += b != 0;
    return c;
}

// Convex blend of own and partner statistics; masked tokens are re-expressed
// under the blended style, unmasked tokens pass through untouched:
//   x~_t = sigma_mix * (x_t - mu) / sigma + mu_mix.
inline TokenSequence mix_styles(const TokenSequence& x, const StyleStats& partner,
                                double eps, const SaliencyMask& mask) {
    const std::size_t L = x.rows, D = x.cols;
    require(mask.size() == L, "mix_styles: mask length mismatch");
    require(partner.mu.size() == D && partner.sigma.size() == D,
            "mix_styles: stats dimension mismatch");
    require(eps >= 0.0 && eps <= 1.0, "mix_styles: eps outside [0, 1]");
    TokenSequence out = x;
    // eps = 1 keeps the sample's own statistics: exact identity (the general
    // expression reduces to x up to rounding; the gradient reduces likewise)
    if (eps == 1.0) return out;
    const StyleStats self = style_stats(x);
    for (std::size_t d = 0; d < D; ++d) {
        const double mu_mix = eps * self.mu[d] + (1.0 - eps) * partner.mu[d];
        const double sigma_mix = eps * self.sigma[d] + (1.0 - eps) * partner.sigma[d];
        const double inv = 1.0 / self.sigma[d];
        for (std::size_t t = 0; t < L; ++t)
            if (mask[t]) out(t, d) = sigma_mix * (x(t, d) - self.mu[d]) * inv + mu_mix;
    }
    return out;
}

// Model-aware token saliency: magnitude of the diagonal attention response,
//   score_t = |<C_t, B_t>| * (1/D) sum_d delta_td * |x_td|,
// built from the layer's own projections.
inline Vec saliency_m(const TokenSequence& x, const SelectiveLayerParams& p) {
    const Projections proj = project_params(x, p);
    const std::size_t L = x.rows, D = x.cols, N = p.state_dim();
    Vec score(L, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
        double cb = 0.0;
        for (std::size_t n = 0; n < N; ++n) cb += proj.C(t, n) * proj.B(t, n);
        double gate = 0.0;
        for (std::size_t d = 0; d < D; ++d)
            gate += softplus(proj.delta_raw(t, d)) * std::fabs(x(t, d));
        score[t] = std::fabs(cb) * gate / static_cast<double>(D);
    }
    return score;
}

// Model-free fallback: mean absolute activation per token.
inline Vec saliency_x(const TokenSequence& x) {
    const std::size_t L = x.rows, D = x.cols;
    require(L >= 1, "saliency_x: empty sequence");
    Vec score(L, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += std::fabs(x(t, d));
        score[t] = s / static_cast<double>(D);
    }
    return score;
}

// Marks the round(p * L) highest-scoring tokens; ties resolve to the lower
// index so the mask is deterministic.
inline SaliencyMask top_p_mask(const Vec& scores, double p) {
    require(p >= 0.0 && p <= 1.0, "top_p_mask: p outside [0, 1]");
    const std::size_t L = scores.size();
    require(L >= 1, "top_p_mask: empty scores");
    for (double s : scores) require(std::isfinite(s), "top_p_mask: non-finite score");
    std::size_t k = static_cast<std::size_t>(
        std::llround(p * static_cast<double>(L)));
    k = std::min(k, L);
    std::vector<std::size_t> idx(L);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    SaliencyMask mask(L, 0);
    for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
    return mask;
}

enum class AugmentVariant { none, start_m, start_x, random_token, full_sequence };

inline std::string to_string(AugmentVariant v) {
    switch (v) {
        case AugmentVariant::none: return "none";
        case AugmentVariant::start_m: return "start-m";
        case AugmentVariant::start_x: return "start-x";
        case AugmentVariant::random_token: return "random-token";
        case AugmentVariant::full_sequence: return "full-seq";
    }
    return "none";
}

inline AugmentVariant variant_from_string(const std::string& s) {
    if (s == "none") return AugmentVariant::none;
    if (s == "start-m") return AugmentVariant::start_m;
    if (s == "start-x") return AugmentVariant::start_x;
    if (s == "random-token") return AugmentVariant::random_token;
    if (s == "full-seq") return AugmentVariant::full_sequence;
    throw std::invalid_argument("unknown augmentation variant: " + s);
}

struct AugmentPolicy {
    AugmentVariant variant = AugmentVariant::none;
    double p_token = 0.75;
    double apply_prob = 0.5;
    double beta_a = 0.1;
    double beta_b = 0.1;
    bool training = true;

    void validate() const {
        require(p_token >= 0.0 && p_token <= 1.0, "policy: p_token outside [0, 1]");
        require(apply_prob >= 0.0 && apply_prob <= 1.0,
                "policy: apply_prob outside [0, 1]");
        require(beta_a > 0.0 && beta_b > 0.0, "policy: beta parameters must be positive");
    }
};

// Everything needed to replay (and differentiate) one sample's augmentation.
struct AugmentRecord {
    bool applied = false;
    std::size_t partner = 0;
    double eps = 1.0;
    SaliencyMask mask;
};

struct AugmentBatch {
    std::vector<TokenSequence> x;
    std::vector<AugmentRecord> records;
};

// Deterministic replay: applies previously drawn records to a batch. Partner
// statistics always come from the clean input batch, so results do not
// depend on sample order.
inline std::vector<TokenSequence> apply_records(const std::vector<TokenSequence>& batch,
                                                const std::vector<AugmentRecord>& records) {
    require(records.size() == batch.size(), "apply_records: record count mismatch");
    std::vector<TokenSequence> out = batch;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const AugmentRecord& r = records[i];
        if (!r.applied) continue;
        require(r.partner < batch.size() && r.partner != i,
                "apply_records: bad partner index");
        out[i] = mix_styles(batch[i], style_stats(batch[r.partner]), r.eps, r.mask);
    }
    return out;
}

// Training-time augmentation. Per sample, in order: one uniform draw decides
// whether to fire, then partner and eps are drawn; only the random-token
// variant consumes further randomness (one uniform per token for its
// scores). Inference (training == false) is an exact no-op that leaves the
// generator untouched.
inline AugmentBatch apply_start(const std::vector<TokenSequence>& batch,
                                const SelectiveLayerParams& p,
                                const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    const std::size_t B = batch.size();
    AugmentBatch out;
    out.x = batch;
    out.records.resize(B);
    if (!policy.training || policy.variant == AugmentVariant::none || B < 2) return out;

    for (std::size_t i = 0; i < B; ++i) {
        if (rng.uniform01() >= policy.apply_prob) continue;
        std::size_t j = rng.uniform_index(B - 1);
        if (j >= i) ++j;
        const double eps = rng.beta(policy.beta_a, policy.beta_b);

        const std::size_t L = batch[i].rows;
        SaliencyMask mask;
        switch (policy.variant) {
            case AugmentVariant::start_m:
                mask = top_p_mask(saliency_m(batch[i], p), policy.p_token);
                break;
            case AugmentVariant::start_x:
                mask = top_p_mask(saliency_x(batch[i]), policy.p_token);
                break;
            case AugmentVariant::random_token: {
                Vec scores(L);
                for (auto& s : scores) s = rng.uniform01();
                mask = top_p_mask(scores, policy.p_token);
                break;
            }
            case AugmentVariant::full_sequence:
                mask.assign(L, 1);
                break;
            case AugmentVariant::none:
                break;
        }
        out.records[i] = {true, j, eps, std::move(mask)};
    }
    out.x = apply_records(batch, out.records);
    return out;
}

// Gradient of the augmentation with respect to the clean batch. Mask
// selection is discrete (no gradient); the style statistics of both the
// sample and its partner are differentiated exactly. Per channel, with
// r = (x - mu)/sigma, G = sum_{masked} g, Gr = sum_{masked} g r:
//   self:    dx_t = g_t * (mask_t ? sigma_mix/sigma : 1)
//                   + (eps - sigma_mix/sigma) (G + Gr r_t) / L
//   partner: dx_t += (1 - eps) (G + Gr r'_t) / L
inline std::vector<Matrix> apply_start_backward(const std::vector<TokenSequence>& batch,
                                                const std::vector<AugmentRecord>& records,
                                                const std::vector<Matrix>& dout) {
    const std::size_t B = batch.size();
    require(records.size() == B && dout.size() == B,
            "apply_start_backward: batch size mismatch");
    std::vector<Matrix> dx = dout;

    // self terms first, partner accumulation second, so a sample that is both
    // augmented and someone's partner combines correctly.
    for (std::size_t i = 0; i < B; ++i) {
        const AugmentRecord& r = records[i];
        if (!r.applied) continue;
        const std::size_t L = batch[i].rows, D = batch[i].cols;
        require(dout[i].rows == L && dout[i].cols == D,
                "apply_start_backward: dout shape mismatch");
        const StyleStats self = style_stats(batch[i]);
        const StyleStats partner = style_stats(batch[r.partner]);
        for (std::size_t d = 0; d < D; ++d) {
            const double sigma_mix =
                r.eps * self.sigma[d] + (1.0 - r.eps) * partner.sigma[d];
            const double ratio = sigma_mix / self.sigma[d];
            double G = 0.0, Gr = 0.0;
            for (std::size_t t = 0; t < L; ++t)
                if (r.mask[t]) {
                    const double rt = (batch[i](t, d) - self.mu[d]) / self.sigma[d];
                    G += dout[i](t, d);
                    Gr += dout[i](t, d) * rt;
                }
            const double common = (r.eps - ratio) / static_cast<double>(L);
            for (std::size_t t = 0; t < L; ++t) {
                const double rt = (batch[i](t, d) - self.mu[d]) / self.sigma[d];
                const double g = dout[i](t, d);
                dx[i](t, d) = (r.mask[t] ? ratio * g : g) + common * (G + Gr * rt);
            }
        }
    }
    for (std::size_t i = 0; i < B; ++i) {
        const AugmentRecord& r = records[i];
        if (!r.applied) continue;
        const std::size_t L = batch[i].rows, D = batch[i].cols;
        const StyleStats self = style_stats(batch[i]);
        const StyleStats partner = style_stats(batch[r.partner]);
        const std::size_t Lp = batch[r.partner].rows;
        for (std::size_t d = 0; d < D; ++d) {
            double G = 0.0, Gr = 0.0;
            for (std::size_t t = 0; t < L; ++t)
                if (r.mask[t]) {
                    const double rt = (batch[i](t, d) - self.mu[d]) / self.sigma[d];
                    G += dout[i](t, d);
                    Gr += dout[i](t, d) * rt;
                }
            const double w = (1.0 - r.eps) / static_cast<double>(Lp);
            for (std::size_t t = 0; t < Lp; ++t) {
                const double rpt =
                    (batch[r.partner](t, d) - partner.mu[d]) / partner.sigma[d];
                dx[r.partner](t, d) += w * (G + Gr * rpt);
            }
        }
    }
    return dx;
}

}  // namespace ssdg
