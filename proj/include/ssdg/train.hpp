#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ssdg/augment.hpp"
#include "ssdg/domain_gap.hpp"
#include "ssdg/model.hpp"
#include "ssdg/optim.hpp"
#include "ssdg/rng.hpp"
#include "ssdg/synth.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr0 = 5e-4;
    double lr_min = 0.0;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    AugmentPolicy policy;

    // epochs == 0 is allowed and means "evaluate the untrained model".
    void validate() const {
        require(batch_size >= 1, "train: batch_size must be at least 1");
        require(lr0 > 0.0 && lr_min >= 0.0 && lr_min <= lr0,
                "train: need 0 <= lr_min <= lr0 and lr0 > 0");
        require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0,
                "train: betas outside (0, 1)");
        require(adam_eps > 0.0, "train: adam_eps must be positive");
        require(weight_decay >= 0.0, "train: negative weight decay");
        policy.validate();
    }

    AdamWConfig adamw(double lr) const {
        AdamWConfig c;
        c.lr = lr;
        c.beta1 = beta1;
        c.beta2 = beta2;
        c.eps = adam_eps;
        c.weight_decay = weight_decay;
        return c;
    }
};

struct EpochMetric {
    std::uint64_t seed = 0;
    std::string held_out_domain;
    std::string variant;
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double target_acc = 0.0;
};

inline std::string metrics_to_csv(const std::vector<EpochMetric>& rows) {
    std::string out = "seed,held_out_domain,variant,epoch,train_loss,target_acc\n";
    for (const auto& r : rows) {
        out += std::to_string(r.seed);
        out += ',';
        out += r.held_out_domain;
        out += ',';
        out += r.variant;
        out += ',';
        out += std::to_string(r.epoch);
        out += ',';
        out += format_double(r.train_loss);
        out += ',';
        out += format_double(r.target_acc);
        out += '\n';
    }
    return out;
}

struct DomainAccuracy {
    std::string domain_id;
    Vec per_seed;  // final (last-epoch) held-out accuracy per seed
    double mean = 0.0;
    double stddev = 0.0;
};

struct RunGapReport {
    std::uint64_t seed = 0;
    std::string held_out_domain;
    DomainGapReport report;
};

struct TrainedRun {
    std::uint64_t seed = 0;
    std::string held_out_domain;
    Model model;
};

struct LodoResult {
    std::string variant;
    std::vector<EpochMetric> metrics;
    std::vector<DomainAccuracy> per_domain;
    double overall_mean = 0.0;
    double overall_std = 0.0;
    std::vector<TrainedRun> runs;
    std::vector<RunGapReport> gaps;  // filled only when requested
};

struct LodoOptions {
    SynthDGConfig data;
    ModelConfig model;
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    bool compute_gaps = false;
    std::size_t gap_layer = static_cast<std::size_t>(-1);  // default: deepest block
    std::size_t gap_samples_per_domain = 24;
    GammaMode gap_gamma = GammaMode::median();
    bool keep_models = true;
};

namespace detail {

inline void mean_std(const Vec& v, double& mean, double& stddev) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - mean) * (x - mean);
    stddev = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
}

inline void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i-- > 1;) {
        const std::size_t j = rng.uniform_index(i + 1);
        std::swap(idx[i], idx[j]);
    }
}

// strided pick so every class (samples are stored class-major) contributes
inline FeatureBank strided_bank(const DomainData& dom, std::size_t want) {
    FeatureBank bank;
    bank.domain_id = dom.domain_id;
    const std::size_t n = dom.samples.size();
    const std::size_t take = std::min(want, n);
    const std::size_t stride = std::max<std::size_t>(1, n / take);
    for (std::size_t i = 0; i < n && bank.samples.size() < take; i += stride)
        bank.samples.push_back(dom.samples[i].x);
    return bank;
}

}  // namespace detail

inline double evaluate_accuracy(const Model& model,
                                const std::vector<LabeledSample>& samples,
                                std::size_t batch_size) {
    require(!samples.empty(), "evaluate_accuracy: no samples");
    AugmentPolicy off;
    off.variant = AugmentVariant::none;
    off.training = false;
    Rng dummy(0);  // never consumed at inference
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
        const std::size_t hi = std::min(samples.size(), lo + batch_size);
        std::vector<TokenSequence> batch;
        batch.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) batch.push_back(samples[i].x);
        ModelCaches caches = model_forward(batch, model, off, dummy);
        for (std::size_t i = lo; i < hi; ++i)
            if (predict_class(caches.logits, i - lo) == samples[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// One training run: fixed held-out domain, fixed seed. Returns the last-epoch
// model and appends one metric row per epoch (none for epochs == 0).
inline Model train_one(const std::vector<LabeledSample>& source,
                       const std::vector<LabeledSample>& target,
                       const ModelConfig& mcfg, const TrainConfig& tcfg,
                       std::uint64_t run_seed, std::uint64_t label_seed,
                       const std::string& held_out_id,
                       std::vector<EpochMetric>* metrics) {
    tcfg.validate();
    mcfg.validate();
    require(!source.empty(), "train_one: empty source pool");

    Rng init_rng(derive_seed(run_seed, 1));
    Rng shuffle_rng(derive_seed(run_seed, 2));
    Rng augment_rng(derive_seed(run_seed, 3));

    Model model = init_model(mcfg, init_rng);
    AdamWState state(model.param_count());

    std::vector<std::size_t> order(source.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, tcfg.epochs, tcfg.lr0, tcfg.lr_min);
        const AdamWConfig acfg = tcfg.adamw(lr);
        detail::fisher_yates(order, shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += tcfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + tcfg.batch_size);
            std::vector<TokenSequence> batch;
            std::vector<std::size_t> labels;
            batch.reserve(hi - lo);
            labels.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                batch.push_back(source[order[i]].x);
                labels.push_back(source[order[i]].label);
            }
            ModelCaches caches = model_forward(batch, model, tcfg.policy, augment_rng);
            Matrix dlogits;
            const double loss = cross_entropy(caches.logits, labels, dlogits);
            loss_sum += loss * static_cast<double>(hi - lo);
            ModelGrads grads = model_backward(model, caches, dlogits);
            std::vector<double*> params = model.param_views();
            adamw_step(params, grads.flat(), state, acfg);
        }

        if (metrics) {
            EpochMetric row;
            row.seed = label_seed;
            row.held_out_domain = held_out_id;
            row.variant = to_string(tcfg.policy.variant);
            row.epoch = epoch + 1;
            row.train_loss = loss_sum / static_cast<double>(source.size());
            row.target_acc = evaluate_accuracy(model, target, tcfg.batch_size);
            metrics->push_back(row);
        }
    }
    return model;
}

inline LodoResult run_lodo(const LodoOptions& opts) {
    opts.data.validate();
    opts.model.validate();
    opts.train.validate();
    require(!opts.seeds.empty(), "run_lodo: no seeds");
    require(opts.model.D == opts.data.D, "run_lodo: model/data channel mismatch");
    require(opts.model.num_classes == opts.data.num_classes,
            "run_lodo: model/data class-count mismatch");

    const std::vector<DomainData> domains = synth_dataset(opts.data);
    const std::size_t gap_layer = opts.gap_layer == static_cast<std::size_t>(-1)
                                      ? opts.model.depth - 1
                                      : opts.gap_layer;

    LodoResult result;
    result.variant = to_string(opts.train.policy.variant);

    Vec all_final;
    for (std::size_t hd = 0; hd < domains.size(); ++hd) {
        DomainAccuracy acc;
        acc.domain_id = domains[hd].domain_id;

        std::vector<LabeledSample> source;
        for (std::size_t d = 0; d < domains.size(); ++d)
            if (d != hd)
                source.insert(source.end(), domains[d].samples.begin(),
                              domains[d].samples.end());
        const std::vector<LabeledSample>& target = domains[hd].samples;

        for (std::uint64_t s : opts.seeds) {
            // fold the held-out index into the run seed so runs differ
            const std::uint64_t run_seed = derive_seed(opts.train.seed ^ s, 100 + hd);
            Model model = train_one(source, target, opts.model, opts.train, run_seed,
                                    s, domains[hd].domain_id, &result.metrics);
            const double final_acc =
                evaluate_accuracy(model, target, opts.train.batch_size);
            acc.per_seed.push_back(final_acc);
            all_final.push_back(final_acc);

            if (opts.compute_gaps) {
                std::vector<FeatureBank> banks;
                for (std::size_t d = 0; d < domains.size(); ++d)
                    if (d != hd)
                        banks.push_back(detail::strided_bank(
                            domains[d], opts.gap_samples_per_domain));
                RunGapReport g;
                g.seed = s;
                g.held_out_domain = domains[hd].domain_id;
                g.report = matrix_domain_gaps(model, banks, gap_layer, opts.gap_gamma);
                result.gaps.push_back(std::move(g));
            }
            if (opts.keep_models) {
                TrainedRun run;
                run.seed = s;
                run.held_out_domain = domains[hd].domain_id;
                run.model = std::move(model);
                result.runs.push_back(std::move(run));
            }
        }
        detail::mean_std(acc.per_seed, acc.mean, acc.stddev);
        result.per_domain.push_back(std::move(acc));
    }
    detail::mean_std(all_final, result.overall_mean, result.overall_std);
    return result;
}

}  // namespace ssdg
