#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ssdg/augment.hpp"
#include "ssdg/domain_gap.hpp"
#include "ssdg/mmd.hpp"
#include "ssdg/rng.hpp"
#include "ssdg/ssm.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct ModelConfig {
    std::size_t depth = 2;
    std::size_t D = 8;
    std::size_t N = 4;
    std::size_t num_classes = 5;

    void validate() const {
        require(depth >= 1, "model: depth must be at least 1");
        require(D >= 1 && N >= 1 && num_classes >= 2, "model: bad dimensions");
    }
};

// depth stacked selective blocks; each block maps the (possibly augmented)
// stream u to u + silu(s6(u)). Mean-pool over tokens, then affine classify.
struct Model {
    ModelConfig cfg;
    std::vector<SelectiveLayerParams> blocks;
    Matrix W_cls;  // D x num_classes
    Vec b_cls;     // num_classes

    std::size_t param_count() const {
        std::size_t n = W_cls.data.size() + b_cls.size();
        for (const auto& b : blocks)
            n += b.A_log.data.size() + b.W_B.data.size() + b.b_B.size() +
                 b.W_C.data.size() + b.b_C.size() + b.W_delta.data.size() +
                 b.b_delta.size();
        return n;
    }

    // flat mutable view over every parameter, in a fixed order
    std::vector<double*> param_views() {
        std::vector<double*> v;
        v.reserve(param_count());
        for (auto& blk : blocks) {
            for (auto& x : blk.A_log.data) v.push_back(&x);
            for (auto& x : blk.W_B.data) v.push_back(&x);
            for (auto& x : blk.b_B) v.push_back(&x);
            for (auto& x : blk.W_C.data) v.push_back(&x);
            for (auto& x : blk.b_C) v.push_back(&x);
            for (auto& x : blk.W_delta.data) v.push_back(&x);
            for (auto& x : blk.b_delta) v.push_back(&x);
        }
        for (auto& x : W_cls.data) v.push_back(&x);
        for (auto& x : b_cls) v.push_back(&x);
        return v;
    }
};

struct ModelGrads {
    std::vector<SelectiveLayerGrads> blocks;
    Matrix W_cls;
    Vec b_cls;

    static ModelGrads zeros(const ModelConfig& cfg) {
        ModelGrads g;
        for (std::size_t i = 0; i < cfg.depth; ++i)
            g.blocks.push_back(SelectiveLayerGrads::zeros(cfg.D, cfg.N));
        g.W_cls = Matrix(cfg.D, cfg.num_classes);
        g.b_cls = Vec(cfg.num_classes, 0.0);
        return g;
    }

    void scale(double s) {
        for (auto& b : blocks) b.scale(s);
        for (auto& v : W_cls.data) v *= s;
        for (auto& v : b_cls) v *= s;
    }

    // flat values in the same order as Model::param_views
    Vec flat() const {
        Vec v;
        for (const auto& blk : blocks) {
            v.insert(v.end(), blk.A_log.data.begin(), blk.A_log.data.end());
            v.insert(v.end(), blk.W_B.data.begin(), blk.W_B.data.end());
            v.insert(v.end(), blk.b_B.begin(), blk.b_B.end());
            v.insert(v.end(), blk.W_C.data.begin(), blk.W_C.data.end());
            v.insert(v.end(), blk.b_C.begin(), blk.b_C.end());
            v.insert(v.end(), blk.W_delta.data.begin(), blk.W_delta.data.end());
            v.insert(v.end(), blk.b_delta.begin(), blk.b_delta.end());
        }
        v.insert(v.end(), W_cls.data.begin(), W_cls.data.end());
        v.insert(v.end(), b_cls.begin(), b_cls.end());
        return v;
    }
};

// Stable init: decay spectrum spread over the state dimension, token-step
// scales log-uniform in [1e-3, 1e-1], small random projections.
inline Model init_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    const double wscale = 1.0 / std::sqrt(static_cast<double>(cfg.D));
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        auto p = SelectiveLayerParams::zeros(cfg.D, cfg.N);
        for (std::size_t d = 0; d < cfg.D; ++d)
            for (std::size_t n = 0; n < cfg.N; ++n)
                p.A_log(d, n) = std::log(static_cast<double>(n + 1));
        for (auto& v : p.W_B.data) v = rng.normal(0.0, wscale);
        for (auto& v : p.W_C.data) v = rng.normal(0.0, wscale);
        for (auto& v : p.W_delta.data) v = rng.normal(0.0, 0.1 * wscale);
        for (auto& v : p.b_delta) {
            const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
            v = std::log(std::expm1(dt));
        }
        m.blocks.push_back(std::move(p));
    }
    m.W_cls = Matrix(cfg.D, cfg.num_classes);
    for (auto& v : m.W_cls.data) v = rng.normal(0.0, 0.01);
    m.b_cls = Vec(cfg.num_classes, 0.0);
    return m;
}

// Everything the backward pass needs, for a whole batch.
struct ModelCaches {
    struct BlockCache {
        std::vector<TokenSequence> clean_in;     // batch input to apply_start
        std::vector<AugmentRecord> records;
        std::vector<ScanCache> scans;            // forward over the augmented stream
    };
    std::vector<BlockCache> blocks;
    std::vector<Vec> pooled;  // per sample, D
    Matrix logits;            // batch x num_classes
};

inline ModelCaches model_forward(const std::vector<TokenSequence>& batch,
                                 const Model& model, const AugmentPolicy& policy,
                                 Rng& rng) {
    model.cfg.validate();
    require(!batch.empty(), "model_forward: empty batch");
    for (const auto& x : batch)
        require(x.cols == model.cfg.D, "model_forward: channel mismatch");

    ModelCaches caches;
    caches.blocks.resize(model.cfg.depth);
    std::vector<TokenSequence> stream = batch;
    for (std::size_t bl = 0; bl < model.cfg.depth; ++bl) {
        auto& bc = caches.blocks[bl];
        bc.clean_in = stream;
        AugmentBatch aug = apply_start(stream, model.blocks[bl], policy, rng);
        bc.records = std::move(aug.records);
        bc.scans.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            ScanCache sc = s6_forward(aug.x[i], model.blocks[bl]);
            TokenSequence out = aug.x[i];
            for (std::size_t t = 0; t < out.rows; ++t)
                for (std::size_t d = 0; d < out.cols; ++d)
                    out(t, d) += silu(sc.output(t, d));
            bc.scans.push_back(std::move(sc));
            stream[i] = std::move(out);
        }
    }

    caches.pooled.resize(batch.size());
    caches.logits = Matrix(batch.size(), model.cfg.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TokenSequence& y = stream[i];
        Vec pooled(model.cfg.D, 0.0);
        for (std::size_t t = 0; t < y.rows; ++t)
            for (std::size_t d = 0; d < y.cols; ++d) pooled[d] += y(t, d);
        for (auto& v : pooled) v /= static_cast<double>(y.rows);
        for (std::size_t c = 0; c < model.cfg.num_classes; ++c) {
            double acc = model.b_cls[c];
            for (std::size_t d = 0; d < model.cfg.D; ++d)
                acc += pooled[d] * model.W_cls(d, c);
            caches.logits(i, c) = acc;
        }
        caches.pooled[i] = std::move(pooled);
    }
    return caches;
}

// Exact reverse sweep; dlogits is batch x num_classes. Returns the summed
// (not averaged) gradients over the batch.
inline ModelGrads model_backward(const Model& model, const ModelCaches& caches,
                                 const Matrix& dlogits) {
    const std::size_t B = caches.pooled.size();
    require(dlogits.rows == B && dlogits.cols == model.cfg.num_classes,
            "model_backward: dlogits shape mismatch");
    require(caches.blocks.size() == model.cfg.depth,
            "model_backward: cache depth mismatch");

    ModelGrads grads = ModelGrads::zeros(model.cfg);

    // classifier and pooling
    std::vector<Matrix> dstream(B);
    for (std::size_t i = 0; i < B; ++i) {
        Vec dpooled(model.cfg.D, 0.0);
        for (std::size_t c = 0; c < model.cfg.num_classes; ++c) {
            const double g = dlogits(i, c);
            grads.b_cls[c] += g;
            for (std::size_t d = 0; d < model.cfg.D; ++d) {
                grads.W_cls(d, c) += caches.pooled[i][d] * g;
                dpooled[d] += model.W_cls(d, c) * g;
            }
        }
        const std::size_t L = caches.blocks.back().scans[i].output.rows;
        Matrix dy(L, model.cfg.D);
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t d = 0; d < model.cfg.D; ++d)
                dy(t, d) = dpooled[d] / static_cast<double>(L);
        dstream[i] = std::move(dy);
    }

    for (std::size_t bl = model.cfg.depth; bl-- > 0;) {
        const auto& bc = caches.blocks[bl];
        std::vector<Matrix> du(B);
        for (std::size_t i = 0; i < B; ++i) {
            const ScanCache& sc = bc.scans[i];
            const Matrix& dout = dstream[i];
            Matrix ds(dout.rows, dout.cols);
            for (std::size_t t = 0; t < dout.rows; ++t)
                for (std::size_t d = 0; d < dout.cols; ++d)
                    ds(t, d) = dout(t, d) * silu_grad(sc.output(t, d));
            SelectiveLayerGrads dp;
            Matrix dscan = s6_backward(sc, model.blocks[bl], ds, dp);
            grads.blocks[bl].accumulate(dp);
            // residual: du = dout + dscan
            du[i] = dout;
            for (std::size_t k = 0; k < du[i].data.size(); ++k)
                du[i].data[k] += dscan.data[k];
        }
        dstream = apply_start_backward(bc.clean_in, bc.records, du);
    }
    return grads;
}

// Mean cross-entropy over the batch plus the matching dlogits (softmax minus
// one-hot, divided by batch size).
inline double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels,
                            Matrix& dlogits) {
    const std::size_t B = logits.rows, C = logits.cols;
    require(labels.size() == B, "cross_entropy: label count mismatch");
    dlogits = Matrix(B, C);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        require(labels[i] < C, "cross_entropy: label out of range");
        double mx = logits(i, 0);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits(i, c));
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(logits(i, c) - mx);
        const double logz = std::log(z) + mx;
        loss += logz - logits(i, labels[i]);
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(logits(i, c) - logz);
            dlogits(i, c) = (p - (c == labels[i] ? 1.0 : 0.0)) / static_cast<double>(B);
        }
    }
    return loss / static_cast<double>(B);
}

// argmax with ties resolved to the lowest class index
inline std::size_t predict_class(const Matrix& logits, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c)
        if (logits(row, c) > logits(row, best)) best = c;
    return best;
}

// Feeds each bank through blocks [0, layer) at inference and measures the
// designated block's token-level gaps over delta, B, C, and features.
inline DomainGapReport matrix_domain_gaps(const Model& model,
                                          const std::vector<FeatureBank>& input_banks,
                                          std::size_t layer, const GammaMode& mode) {
    require(layer < model.cfg.depth, "matrix_domain_gaps: layer index out of range");
    std::vector<FeatureBank> at_layer;
    at_layer.reserve(input_banks.size());
    for (const auto& bank : input_banks) {
        bank.validate();
        FeatureBank fed;
        fed.domain_id = bank.domain_id;
        for (const auto& x : bank.samples) {
            TokenSequence cur = x;
            for (std::size_t bl = 0; bl < layer; ++bl) {
                ScanCache sc = s6_forward(cur, model.blocks[bl]);
                for (std::size_t t = 0; t < cur.rows; ++t)
                    for (std::size_t d = 0; d < cur.cols; ++d)
                        cur(t, d) += silu(sc.output(t, d));
            }
            fed.samples.push_back(std::move(cur));
        }
        at_layer.push_back(std::move(fed));
    }
    return layer_domain_gaps(model.blocks[layer], at_layer, mode);
}

}  // namespace ssdg
