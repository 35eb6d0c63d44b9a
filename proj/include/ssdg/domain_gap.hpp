#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ssdg/mmd.hpp"
#include "ssdg/ssm.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct DomainGapRow {
    std::string quantity;
    std::string domain_a;
    std::string domain_b;
    double value = 0.0;
    double gamma = 0.0;
};

// Token-level gaps over the selective layer's input-dependent quantities.
// The headline gap_* fields take the maximum over domain pairs; rows carry
// the full pair table.
struct DomainGapReport {
    double gap_delta = 0.0;
    double gap_B = 0.0;
    double gap_C = 0.0;
    double gap_features = 0.0;
    std::vector<DomainGapRow> rows;
};

inline std::string to_csv(const DomainGapReport& report) {
    std::ostringstream os;
    os << "quantity,domain_a,domain_b,value,gamma\n";
    for (const auto& r : report.rows)
        os << r.quantity << ',' << r.domain_a << ',' << r.domain_b << ','
           << format_double(r.value) << ',' << format_double(r.gamma) << '\n';
    return os.str();
}

// Runs the selective layer over every sample of every bank and measures the
// token-level gap of delta (post-softplus), B, C, and the layer output,
// for every unordered pair of domains.
inline DomainGapReport layer_domain_gaps(const SelectiveLayerParams& p,
                                         const std::vector<FeatureBank>& input_banks,
                                         const GammaMode& mode) {
    require(input_banks.size() >= 2, "layer_domain_gaps: need at least two domains");
    for (const auto& b : input_banks) b.validate();

    struct Harvest {
        FeatureBank delta, B, C, features;
    };
    std::vector<Harvest> per_domain;
    per_domain.reserve(input_banks.size());
    for (const auto& bank : input_banks) {
        Harvest h;
        h.delta.domain_id = h.B.domain_id = h.C.domain_id = h.features.domain_id =
            bank.domain_id;
        for (const auto& x : bank.samples) {
            ScanCache cache = s6_forward(x, p);
            h.delta.samples.push_back(cache.ops.delta);
            h.B.samples.push_back(cache.ops.B);
            h.C.samples.push_back(cache.ops.C);
            h.features.samples.push_back(cache.output);
        }
        per_domain.push_back(std::move(h));
    }

    DomainGapReport report;
    auto run_quantity = [&](const std::string& name,
                            const FeatureBank& (*pick)(const Harvest&)) {
        double worst = 0.0;
        for (std::size_t i = 0; i < per_domain.size(); ++i)
            for (std::size_t j = i + 1; j < per_domain.size(); ++j) {
                double gamma = 0.0;
                const double v =
                    to_mmd(pick(per_domain[i]), pick(per_domain[j]), mode, &gamma);
                report.rows.push_back({name, input_banks[i].domain_id,
                                       input_banks[j].domain_id, v, gamma});
                worst = std::max(worst, v);
            }
        return worst;
    };
    report.gap_delta = run_quantity(
        "delta", +[](const Harvest& h) -> const FeatureBank& { return h.delta; });
    report.gap_B = run_quantity(
        "B", +[](const Harvest& h) -> const FeatureBank& { return h.B; });
    report.gap_C = run_quantity(
        "C", +[](const Harvest& h) -> const FeatureBank& { return h.C; });
    report.gap_features = run_quantity(
        "features", +[](const Harvest& h) -> const FeatureBank& { return h.features; });
    return report;
}

// One token's worth of the gap decomposition between two domains' mean
// sequences: the exact output gap, and the three pieces of the first-order
// reconstruction (carried previous gap, the delta-difference term, and the
// per-token diagonal read-out difference).
struct AccumulationTrace {
    std::size_t token_index = 0;  // 1-based
    Vec exact_gap;                // |y_i^S - y_i^T| per channel
    Vec carry;                    // beta + delta^S * (ay^S - ay^T)
    Vec term_delta;               // (delta^S - delta^T) * ay^T
    Vec term_cdbx;                // C_i (Bbar_i x_i)^S - C_i (Bbar_i x_i)^T
    Vec approx_error;             // |exact signed gap - reconstruction|
};

// Traces how the output gap between two aligned sequences evolves token by
// token. exact_gap comes from two independent full forward passes; the
// reconstruction linearizes the decay operator (e^{dA} ~ 1 + dA) and reads
// the previous state with the previous token's C (C-ratio ~ 1); everything
// else, including the diagonal read-out term, is exact.
inline std::vector<AccumulationTrace> accumulation_trace(const TokenSequence& xS,
                                                         const TokenSequence& xT,
                                                         const SelectiveLayerParams& p) {
    require(xS.rows == xT.rows && xS.cols == xT.cols,
            "accumulation_trace: sequence shape mismatch");
    const std::size_t L = xS.rows, D = xS.cols, N = p.state_dim();

    const ScanCache cs = s6_forward(xS, p);
    const ScanCache ct = s6_forward(xT, p);

    // cbx(i, d) = sum_n C(i, n) Bbar(i, d, n) x(i, d)
    auto cbx_at = [N](const ScanCache& c, std::size_t i, std::size_t d) {
        double v = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            v += c.ops.C(i, n) * c.ops.B_bar(i, d, n);
        return v * c.input(i, d);
    };
    // ay(i, d) = sum_n A(d, n) C(i, n) h(i, d, n)
    auto ay_at = [N, &p](const ScanCache& c, std::size_t i, std::size_t d) {
        double v = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            v += p.A(d, n) * c.ops.C(i, n) * c.hidden(i, d, n);
        return v;
    };

    std::vector<AccumulationTrace> out(L);
    for (std::size_t i = 0; i < L; ++i) {
        AccumulationTrace& tr = out[i];
        tr.token_index = i + 1;
        tr.exact_gap.assign(D, 0.0);
        tr.carry.assign(D, 0.0);
        tr.term_delta.assign(D, 0.0);
        tr.term_cdbx.assign(D, 0.0);
        tr.approx_error.assign(D, 0.0);
        for (std::size_t d = 0; d < D; ++d) {
            const double signed_gap = cs.output(i, d) - ct.output(i, d);
            tr.exact_gap[d] = std::fabs(signed_gap);
            tr.term_cdbx[d] = cbx_at(cs, i, d) - cbx_at(ct, i, d);
            if (i > 0) {
                const double beta = cs.output(i - 1, d) - ct.output(i - 1, d);
                const double ayS = ay_at(cs, i - 1, d);
                const double ayT = ay_at(ct, i - 1, d);
                tr.carry[d] = beta + cs.ops.delta(i, d) * (ayS - ayT);
                tr.term_delta[d] =
                    (cs.ops.delta(i, d) - ct.ops.delta(i, d)) * ayT;
            }
            const double recon = tr.carry[d] + tr.term_delta[d] + tr.term_cdbx[d];
            tr.approx_error[d] = std::fabs(signed_gap - recon);
        }
    }
    return out;
}

}  // namespace ssdg
