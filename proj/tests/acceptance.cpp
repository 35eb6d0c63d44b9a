// Acceptance gate: one pass/fail line per criterion, exit 0 only if all pass.
// Criteria 7 and 8 share one set of training runs; everything else is
// self-contained and fast.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ssdg/train.hpp"
#include "ssdg/verify.hpp"

#ifndef SSDG_CLI_PATH
#error "SSDG_CLI_PATH must point at the command line binary"
#endif

using namespace ssdg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof(b), "%.3g", v);
    return b;
}

struct Criterion {
    bool pass = false;
    std::string detail;
};

// --- 1: the three scan formulations agree on random instances ---------------

Criterion scan_oracle_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(90001);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        const std::size_t L = 1 + rng.uniform_index(64);
        const std::size_t D = 1 + rng.uniform_index(8);
        const std::size_t N = 1 + rng.uniform_index(8);
        auto p = verify_detail::random_params(rng, D, N);
        auto x = verify_detail::random_seq(rng, L, D);
        ScanCache seq = s6_forward(x, p);
        Matrix via_alpha = alpha_apply(materialize_alpha(seq.ops), x);
        ScanCache par = scan_parallel(seq.ops, x);
        worst = std::max({worst, rel_error(seq.output, via_alpha),
                          rel_error(seq.output, par.output)});
    }
    const double elapsed = seconds_since(t0);
    Criterion c;
    c.pass = worst <= 1e-10 && elapsed < 10.0;
    c.detail = "200 instances, worst rel " + fmt(worst) + " (bound 1e-10), " +
               fmt(elapsed) + " s (budget 10)";
    return c;
}

// --- 2: analytic gradients match central finite differences -----------------

double s6_fd_worst(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t L = 2 + rng.uniform_index(6);
    const std::size_t D = 1 + rng.uniform_index(3);
    const std::size_t N = 1 + rng.uniform_index(2);
    auto p = verify_detail::random_params(rng, D, N);
    auto x = verify_detail::random_seq(rng, L, D);
    Matrix dy(L, D);
    for (auto& v : dy.data) v = rng.normal(0.0, 1.0);

    ScanCache cache = s6_forward(x, p);
    SelectiveLayerGrads dp;
    (void)s6_backward(cache, p, dy, dp);

    auto objective = [&](const SelectiveLayerParams& q) {
        ScanCache c2 = s6_forward(x, q);
        double s = 0.0;
        for (std::size_t k = 0; k < c2.output.data.size(); ++k)
            s += c2.output.data[k] * dy.data[k];
        return s;
    };
    std::vector<double*> params;
    std::vector<double> grads;
    auto collect = [&](Matrix& pm, const Matrix& gm) {
        for (std::size_t k = 0; k < pm.data.size(); ++k) {
            params.push_back(&pm.data[k]);
            grads.push_back(gm.data[k]);
        }
    };
    collect(p.W_B, dp.W_B);
    collect(p.W_C, dp.W_C);
    collect(p.W_delta, dp.W_delta);
    collect(p.A_log, dp.A_log);
    for (std::size_t k = 0; k < p.b_B.size(); ++k) {
        params.push_back(&p.b_B[k]);
        grads.push_back(dp.b_B[k]);
    }
    for (std::size_t k = 0; k < p.b_C.size(); ++k) {
        params.push_back(&p.b_C[k]);
        grads.push_back(dp.b_C[k]);
    }
    for (std::size_t k = 0; k < p.b_delta.size(); ++k) {
        params.push_back(&p.b_delta[k]);
        grads.push_back(dp.b_delta[k]);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double v = *params[i];
        const double h = 1e-6 * (1.0 + std::fabs(v));
        *params[i] = v + h;
        const double fp = objective(p);
        *params[i] = v - h;
        const double fm = objective(p);
        *params[i] = v;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(grads[i]), 1e-6});
        worst = std::max(worst, std::fabs(fd - grads[i]) / denom);
    }
    return worst;
}

double model_fd_worst(std::uint64_t seed) {
    Rng rng(seed);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.D = 3;
    cfg.N = 2;
    cfg.num_classes = 3;
    Model m = init_model(cfg, rng);
    for (auto& v : m.W_cls.data) v = rng.normal(0.0, 0.3);
    std::vector<TokenSequence> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(verify_detail::random_seq(rng, 5, cfg.D));
    std::vector<std::size_t> labels = {0, 2, 1};
    AugmentPolicy pol;
    pol.variant = AugmentVariant::start_x;
    pol.apply_prob = 1.0;
    pol.p_token = 0.6;

    Rng fr(derive_seed(seed, 7));
    ModelCaches caches = model_forward(batch, m, pol, fr);
    Matrix dlogits;
    cross_entropy(caches.logits, labels, dlogits);
    Vec analytic = model_backward(m, caches, dlogits).flat();

    // deterministic replay of the records drawn at the base point: mask,
    // partner, and eps count as forward-pass constants
    auto objective = [&](const Model& model) {
        std::vector<TokenSequence> stream = batch;
        for (std::size_t bl = 0; bl < model.cfg.depth; ++bl) {
            std::vector<TokenSequence> aug =
                apply_records(stream, caches.blocks[bl].records);
            for (std::size_t i = 0; i < aug.size(); ++i) {
                ScanCache sc = s6_forward(aug[i], model.blocks[bl]);
                for (std::size_t k = 0; k < aug[i].data.size(); ++k)
                    aug[i].data[k] += silu(sc.output.data[k]);
                stream[i] = std::move(aug[i]);
            }
        }
        Matrix logits(stream.size(), model.cfg.num_classes);
        for (std::size_t i = 0; i < stream.size(); ++i)
            for (std::size_t c = 0; c < model.cfg.num_classes; ++c) {
                double acc = model.b_cls[c];
                for (std::size_t d = 0; d < model.cfg.D; ++d) {
                    double pooled = 0.0;
                    for (std::size_t t = 0; t < stream[i].rows; ++t)
                        pooled += stream[i](t, d);
                    acc += pooled / static_cast<double>(stream[i].rows) *
                           model.W_cls(d, c);
                }
                logits(i, c) = acc;
            }
        Matrix dl;
        return cross_entropy(logits, labels, dl);
    };
    std::vector<double*> params = m.param_views();
    // the loss is O(1): h = 1e-4 keeps central differences above the
    // roundoff floor while truncation stays far below the tolerance
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double v = *params[i];
        const double h = 1e-4 * (1.0 + std::fabs(v));
        *params[i] = v + h;
        const double fp = objective(m);
        *params[i] = v - h;
        const double fm = objective(m);
        *params[i] = v;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
        worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
    }
    return worst;
}

Criterion gradient_exactness() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int instances = 0;
    for (std::uint64_t s = 0; s < 12; ++s, ++instances)
        worst = std::max(worst, s6_fd_worst(derive_seed(90002, s)));
    for (std::uint64_t s = 0; s < 8; ++s, ++instances)
        worst = std::max(worst, model_fd_worst(derive_seed(90003, s)));
    const double elapsed = seconds_since(t0);
    Criterion c;
    c.pass = worst <= 1e-5 && elapsed < 30.0;
    c.detail = std::to_string(instances) + " instances, worst rel " + fmt(worst) +
               " (bound 1e-5), " + fmt(elapsed) + " s (budget 30)";
    return c;
}

// --- 3: discretization hand case and series branch --------------------------

Criterion discretization() {
    const double abar = std::exp(-1.0);
    const double scalar_err =
        std::max(std::fabs(std::exp(1.0 * -1.0) - abar),
                 std::fabs(zoh_input_weight(1.0, -1.0) - (1.0 - std::exp(-1.0))));
    double series_err = 0.0;
    for (double A : {-1.0, -0.3, -2.5}) {
        const double delta = 1e-5 / std::fabs(A);
        const double z = delta * A;
        const double direct = std::expm1(z) / A;
        const double series = delta * (1.0 + z / 2.0 + z * z / 6.0);
        series_err = std::max(series_err, std::fabs(direct - series) /
                                              std::max(std::fabs(direct), 1e-300));
    }
    Criterion c;
    c.pass = scalar_err <= 1e-12 && series_err <= 1e-9;
    c.detail = "scalar ZOH err " + fmt(scalar_err) + " (bound 1e-12), series err " +
               fmt(series_err) + " (bound 1e-9)";
    return c;
}

// --- 4: augmentation invariants ----------------------------------------------

Criterion augmentation_invariants() {
    Criterion c;
    std::vector<std::string> fails;

    {  // inference is a bit-exact no-op that draws nothing
        Rng rng(90004);
        auto p = verify_detail::random_params(rng, 4, 3);
        std::vector<TokenSequence> batch;
        for (int i = 0; i < 4; ++i)
            batch.push_back(verify_detail::random_seq(rng, 10, 4));
        AugmentPolicy pol;
        pol.variant = AugmentVariant::start_m;
        pol.training = false;
        Rng r1(7), r2(7);
        AugmentBatch out = apply_start(batch, p, pol, r1);
        bool ok = r1.next_u64() == r2.next_u64();
        for (std::size_t i = 0; i < batch.size(); ++i)
            ok = ok && out.x[i].data == batch[i].data && !out.records[i].applied;
        if (!ok) fails.push_back("inference no-op");
    }
    {  // mask cardinality is exactly round(p * L)
        Rng rng(90005);
        bool ok = true;
        for (std::size_t L : {1u, 5u, 16u, 31u, 64u}) {
            Vec scores(L);
            for (auto& v : scores) v = rng.normal(0.0, 1.0);
            for (double p : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
                const auto want = static_cast<std::size_t>(
                    std::llround(p * static_cast<double>(L)));
                ok = ok && mask_count(top_p_mask(scores, p)) ==
                               std::min(want, static_cast<std::size_t>(L));
            }
        }
        if (!ok) fails.push_back("mask cardinality");
    }
    {  // eps = 1 is a bitwise identity
        Rng rng(90006);
        TokenSequence x = verify_detail::random_seq(rng, 12, 5);
        TokenSequence partner = verify_detail::random_seq(rng, 12, 5);
        SaliencyMask mask(12, 1);
        if (mix_styles(x, style_stats(partner), 1.0, mask).data != x.data)
            fails.push_back("eps identity");
    }
    {  // p_token = 1 trains bit-identically to the full-sequence variant
        SynthDGConfig dcfg;
        dcfg.num_domains = 3;
        dcfg.num_classes = 2;
        dcfg.L = 8;
        dcfg.D = 3;
        dcfg.samples_per_domain_per_class = 6;
        auto domains = synth_dataset(dcfg);
        std::vector<LabeledSample> source = domains[1].samples, target;
        source.insert(source.end(), domains[2].samples.begin(),
                      domains[2].samples.end());
        target = domains[0].samples;
        ModelConfig mcfg;
        mcfg.D = dcfg.D;
        mcfg.N = 2;
        mcfg.num_classes = dcfg.num_classes;
        TrainConfig a;
        a.epochs = 3;
        a.policy.variant = AugmentVariant::start_m;
        a.policy.p_token = 1.0;
        TrainConfig b = a;
        b.policy.variant = AugmentVariant::full_sequence;
        std::vector<EpochMetric> ma, mb;
        Model model_a = train_one(source, target, mcfg, a, 91, 0, "d0", &ma);
        Model model_b = train_one(source, target, mcfg, b, 91, 0, "d0", &mb);
        std::vector<double*> pa = model_a.param_views(), pb = model_b.param_views();
        bool ok = pa.size() == pb.size() && ma.size() == mb.size();
        for (std::size_t i = 0; ok && i < pa.size(); ++i) ok = *pa[i] == *pb[i];
        for (std::size_t i = 0; ok && i < ma.size(); ++i)
            ok = ma[i].train_loss == mb[i].train_loss &&
                 ma[i].target_acc == mb[i].target_acc;
        if (!ok) fails.push_back("full-sequence degeneracy");
    }

    c.pass = fails.empty();
    if (c.pass) {
        c.detail = "inference no-op, mask cardinality, eps identity, "
                   "full-sequence degeneracy: all exact";
    } else {
        c.detail = "failed:";
        for (const auto& f : fails) c.detail += " " + f + ";";
    }
    return c;
}

// --- 5: MMD estimator suite ---------------------------------------------------

Criterion mmd_suite() {
    Criterion c;
    std::vector<std::string> fails;

    {  // identical sets: exactly zero
        Rng rng(90007);
        Matrix X(16, 3);
        for (auto& v : X.data) v = rng.normal(0.0, 1.0);
        if (mmd2(X, X, 2.0) != 0.0) fails.push_back("zero on identical sets");
    }
    {  // singletons: 2 - 2 exp(-d^2 / gamma) in closed form
        double worst = 0.0;
        for (double d : {0.5, 1.0, 3.0})
            for (double gamma : {0.7, 2.0}) {
                Matrix X(1, 2), Y(1, 2);
                X(0, 0) = 1.0;
                X(0, 1) = -2.0;
                Y(0, 0) = X(0, 0) + d;
                Y(0, 1) = X(0, 1);
                const double want = 2.0 - 2.0 * std::exp(-d * d / gamma);
                worst = std::max(worst, std::fabs(mmd2(X, Y, gamma) - want));
            }
        if (worst > 1e-12) fails.push_back("singleton closed form " + fmt(worst));
    }
    {  // mean separation: strictly monotone over {0, 1, 2, 4}, 10 seeds
        bool ok = true;
        for (std::uint64_t s = 0; s < 10 && ok; ++s) {
            Rng rng(derive_seed(90008, s));
            Matrix X(48, 3);
            for (auto& v : X.data) v = rng.normal(0.0, 1.0);
            double prev = -1.0;
            for (double sep : {0.0, 1.0, 2.0, 4.0}) {
                Matrix Y(48, 3);
                for (std::size_t i = 0; i < Y.data.size(); ++i)
                    Y.data[i] = rng.normal(0.0, 1.0) + (i % 3 == 0 ? sep : 0.0);
                const double v = mmd2(X, Y, 3.0);
                ok = ok && v > prev;
                prev = v;
            }
        }
        if (!ok) fails.push_back("separation monotonicity");
    }

    c.pass = fails.empty();
    if (c.pass) {
        c.detail = "exact zero, singleton closed form to 1e-12, strict "
                   "monotonicity over separations {0,1,2,4} x 10 seeds";
    } else {
        c.detail = "failed:";
        for (const auto& f : fails) c.detail += " " + f + ";";
    }
    return c;
}

// --- 6: accumulation identity and small-delta reconstruction ------------------

Criterion accumulation() {
    Criterion c;
    double exact_worst = 0.0;
    {
        Rng rng(90009);
        auto p = verify_detail::random_params(rng, 3, 2);
        auto xS = verify_detail::random_seq(rng, 24, 3);
        auto xT = verify_detail::random_seq(rng, 24, 3);
        auto traces = accumulation_trace(xS, xT, p);
        ScanCache yS = s6_forward(xS, p);
        ScanCache yT = s6_forward(xT, p);
        for (std::size_t t = 0; t < 24; ++t)
            for (std::size_t d = 0; d < 3; ++d) {
                const double gap = std::fabs(yS.output(t, d) - yT.output(t, d));
                exact_worst =
                    std::max(exact_worst, std::fabs(traces[t].exact_gap[d] - gap));
            }
    }
    double approx_worst = 0.0;
    {
        auto inst = verify_detail::small_delta_instance(32, 3, 2);
        auto traces = accumulation_trace(inst.xS, inst.xT, inst.params);
        for (const auto& tr : traces)
            for (std::size_t d = 0; d < tr.exact_gap.size(); ++d) {
                const double denom = std::max(std::fabs(tr.exact_gap[d]), 1e-300);
                approx_worst =
                    std::max(approx_worst, std::fabs(tr.approx_error[d]) / denom);
            }
    }
    c.pass = exact_worst <= 1e-12 && approx_worst <= 1e-4;
    c.detail = "exact identity err " + fmt(exact_worst) +
               " (bound 1e-12), small-delta reconstruction err " + fmt(approx_worst) +
               " (bound 1e-4)";
    return c;
}

// --- 7 and 8: directional experiment on the default benchmark -----------------

struct MatrixResults {
    std::map<std::string, LodoResult> by_variant;
    double directional_seconds = 0.0;  // none + start-m, including gap analysis
    double total_seconds = 0.0;
};

MatrixResults run_matrix() {
    MatrixResults r;
    const auto t0 = Clock::now();
    for (auto variant : {AugmentVariant::none, AugmentVariant::start_m,
                         AugmentVariant::start_x, AugmentVariant::random_token}) {
        LodoOptions o;
        o.train.policy.variant = variant;
        o.compute_gaps =
            variant == AugmentVariant::none || variant == AugmentVariant::start_m;
        o.keep_models = false;
        LodoResult res = run_lodo(o);
        std::fprintf(stderr, "  [matrix] %-12s mean target acc %.4f (%.0f s)\n",
                     res.variant.c_str(), res.overall_mean, seconds_since(t0));
        r.by_variant[res.variant] = std::move(res);
        if (variant == AugmentVariant::start_m)
            r.directional_seconds = seconds_since(t0);
    }
    r.total_seconds = seconds_since(t0);
    return r;
}

std::map<std::string, double> mean_gaps(const LodoResult& r) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& g : r.gaps)
        for (const auto& row : g.report.rows) {
            acc[row.quantity].first += row.value;
            acc[row.quantity].second += 1;
        }
    std::map<std::string, double> out;
    for (auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
    return out;
}

Criterion gap_direction(const MatrixResults& m) {
    Criterion c;
    const auto none = mean_gaps(m.by_variant.at("none"));
    const auto startm = mean_gaps(m.by_variant.at("start-m"));
    std::size_t lower = 0;
    std::string parts;
    for (const auto& q : {"delta", "B", "C", "features"}) {
        const double a = none.at(q), b = startm.at(q);
        lower += b < a;
        parts += std::string(q) + " " + fmt(b) + "<" + fmt(a) + "? " +
                 (b < a ? "yes" : "NO") + "; ";
    }
    c.pass = lower == 4 && m.directional_seconds < 600.0;
    c.detail = "start-m mean To-MMD lower on " + std::to_string(lower) +
               "/4 quantities (" + parts + fmt(m.directional_seconds) +
               " s, budget 600)";
    return c;
}

Criterion accuracy_direction(const MatrixResults& m) {
    Criterion c;
    const double none = m.by_variant.at("none").overall_mean;
    const double startm = m.by_variant.at("start-m").overall_mean;
    const double startx = m.by_variant.at("start-x").overall_mean;
    const double random = m.by_variant.at("random-token").overall_mean;
    const bool o1 = startm > none, o2 = startx > none, o3 = startm > random;
    c.pass = o1 && o2 && o3 && m.total_seconds < 900.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "means none %.4f, start-m %.4f, start-x %.4f, random-token %.4f; "
                  "start-m>none %s, start-x>none %s, start-m>random %s; %.0f s "
                  "(budget 900)",
                  none, startm, startx, random, o1 ? "yes" : "NO",
                  o2 ? "yes" : "NO", o3 ? "yes" : "NO", m.total_seconds);
    c.detail = buf;
    return c;
}

// --- 9: the sequential scan is linear in L ------------------------------------

Criterion bench_linearity() {
    Criterion c;
    const std::string cmd = std::string(SSDG_CLI_PATH) + " bench 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        c.detail = "could not launch bench";
        return c;
    }
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    const int rc = pclose(pipe);
    const int status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::string spread_line = "spread line missing";
    const auto pos = out.find("spread across L: ");
    if (pos != std::string::npos) {
        const auto end = out.find('\n', pos);
        spread_line = out.substr(pos, end - pos);
    }
    c.pass = status == 0;
    c.detail = "bench exit " + std::to_string(status) + ", " + spread_line;
    return c;
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, Criterion>> lines;
    lines.emplace_back("criterion 1: scan oracle equivalence",
                       scan_oracle_equivalence());
    lines.emplace_back("criterion 2: gradient exactness", gradient_exactness());
    lines.emplace_back("criterion 3: discretization hand cases", discretization());
    lines.emplace_back("criterion 4: augmentation invariants",
                       augmentation_invariants());
    lines.emplace_back("criterion 5: MMD estimator suite", mmd_suite());
    lines.emplace_back("criterion 6: accumulation identity", accumulation());

    std::fprintf(stderr, "[acceptance] training the directional matrix...\n");
    const MatrixResults matrix = run_matrix();
    lines.emplace_back("criterion 7: domain-gap direction", gap_direction(matrix));
    lines.emplace_back("criterion 8: accuracy direction", accuracy_direction(matrix));
    lines.emplace_back("criterion 9: scan linearity", bench_linearity());

    bool all = true;
    for (const auto& [name, c] : lines) {
        std::printf("%s %s — %s\n", c.pass ? "PASS" : "FAIL", name.c_str(),
                    c.detail.c_str());
        all = all && c.pass;
    }
    std::printf("%s (%.0f s total)\n", all ? "ALL CRITERIA PASSED" : "CRITERIA FAILED",
                seconds_since(t0));
    return all ? 0 : 1;
}
