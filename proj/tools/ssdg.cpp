#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssdg/config.hpp"
#include "ssdg/serialize.hpp"
#include "ssdg/train.hpp"
#include "ssdg/verify.hpp"

namespace fs = std::filesystem;
using namespace ssdg;

static constexpr const char* kToolVersion = "0.1.0";

namespace {

struct TrainArgs {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    double p_token = -1.0;
    double apply_prob = -1.0;
    std::int64_t seed = -1;
    std::int64_t num_seeds = -1;
    bool force = false;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path.string());
    out << text;
    require(out.good(), "write failed: " + path.string());
}

void prepare_out_dir(const std::string& dir, bool force) {
    const fs::path p(dir);
    if (fs::exists(p)) {
        require(fs::is_directory(p), "output path is not a directory: " + dir);
        if (!fs::is_empty(p) && !force)
            throw std::invalid_argument("output directory " + dir +
                                        " is not empty (use --force to reuse it)");
    } else {
        fs::create_directories(p);
    }
}

int cmd_train(const TrainArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (!args.variant.empty())
        cfg.train.policy.variant = variant_from_string(args.variant);
    if (args.p_token >= 0.0) cfg.train.policy.p_token = args.p_token;
    if (args.apply_prob >= 0.0) cfg.train.policy.apply_prob = args.apply_prob;
    if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    cfg.sync_and_validate();
    require(cfg.train.epochs >= 1, "train: epochs must be at least 1");

    LodoOptions opts;
    opts.data = cfg.data;
    opts.model = cfg.model;
    opts.train = cfg.train;
    if (args.num_seeds >= 1) {
        opts.seeds.clear();
        for (std::int64_t s = 0; s < args.num_seeds; ++s)
            opts.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    opts.keep_models = true;

    prepare_out_dir(args.out_dir, args.force);
    const fs::path out(args.out_dir);
    const fs::path metrics_path = out / "metrics.csv";
    const fs::path summary_path = out / "summary.json";
    const fs::path models_dir = out / "models";
    fs::create_directories(models_dir);

    RunManifest manifest;
    manifest.tool_version = kToolVersion;
    manifest.start_timestamp = now_iso8601_utc();
    manifest.config = cfg;
    manifest.seeds = opts.seeds;
    manifest.output_paths = {metrics_path.string(), summary_path.string(),
                             models_dir.string()};
    write_text(out / "manifest.json", manifest_to_json(manifest).dump(1) + "\n");

    LodoResult result = run_lodo(opts);

    write_text(metrics_path, metrics_to_csv(result.metrics));
    for (const auto& run : result.runs) {
        const std::string name = result.variant + "_holdout-" + run.held_out_domain +
                                 "_seed" + std::to_string(run.seed) + ".json";
        save_model(run.model, (models_dir / name).string());
    }

    nlohmann::json summary;
    summary["variant"] = result.variant;
    summary["overall"] = {{"mean", result.overall_mean}, {"std", result.overall_std}};
    summary["per_domain"] = nlohmann::json::array();
    for (const auto& d : result.per_domain)
        summary["per_domain"].push_back({{"held_out_domain", d.domain_id},
                                         {"mean", d.mean},
                                         {"std", d.stddev},
                                         {"per_seed", d.per_seed}});
    write_text(summary_path, summary.dump(1) + "\n");

    std::cout << "variant " << result.variant << ": mean target accuracy "
              << format_double(result.overall_mean) << " +- "
              << format_double(result.overall_std) << " over "
              << result.per_domain.size() << " held-out domains x "
              << opts.seeds.size() << " seeds\n";
    std::cout << "wrote " << metrics_path.string() << ", " << summary_path.string()
              << ", " << result.runs.size() << " model files\n";
    return 0;
}

struct GapArgs {
    std::string model_path;
    std::string config_path;
    std::string out_dir;
    std::string gamma = "median";
    std::size_t layer = 0;
    std::size_t max_samples = 64;
    bool self_split = false;
};

int cmd_analyze_gap(const GapArgs& args) {
    Model model = load_model(args.model_path);
    ExperimentConfig cfg = load_config(args.config_path);
    cfg.sync_and_validate();
    require(cfg.model.D == model.cfg.D,
            "analyze-gap: model channels disagree with config data channels");

    GammaMode mode = GammaMode::median();
    if (args.gamma != "median") {
        std::size_t pos = 0;
        double g = 0.0;
        try {
            g = std::stod(args.gamma, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("--gamma must be 'median' or a number");
        }
        require(pos == args.gamma.size(), "--gamma must be 'median' or a number");
        mode = GammaMode::fixed(g);
    }

    const auto data = synth_dataset(cfg.data);
    std::vector<FeatureBank> banks;
    if (args.self_split) {
        // split one domain's samples into halves: a no-gap control
        const auto& dom = data.front();
        FeatureBank a, b;
        a.domain_id = dom.domain_id + "-half0";
        b.domain_id = dom.domain_id + "-half1";
        for (std::size_t i = 0; i < dom.samples.size(); ++i)
            (i % 2 == 0 ? a : b).samples.push_back(dom.samples[i].x);
        const std::size_t cap = std::min(args.max_samples, a.samples.size());
        a.samples.resize(cap);
        b.samples.resize(std::min(args.max_samples, b.samples.size()));
        banks = {std::move(a), std::move(b)};
    } else {
        for (const auto& dom : data) {
            FeatureBank bank;
            bank.domain_id = dom.domain_id;
            const std::size_t take = std::min(args.max_samples, dom.samples.size());
            const std::size_t stride = std::max<std::size_t>(
                1, dom.samples.size() / take);
            for (std::size_t i = 0; i < dom.samples.size() && bank.samples.size() < take;
                 i += stride)
                bank.samples.push_back(dom.samples[i].x);
            banks.push_back(std::move(bank));
        }
    }

    DomainGapReport report = matrix_domain_gaps(model, banks, args.layer, mode);

    prepare_out_dir(args.out_dir, true);
    const fs::path out(args.out_dir);
    write_text(out / "gaps.csv", to_csv(report));
    nlohmann::json j;
    j["layer"] = args.layer;
    j["gamma_mode"] = args.gamma;
    j["gap_delta"] = report.gap_delta;
    j["gap_B"] = report.gap_B;
    j["gap_C"] = report.gap_C;
    j["gap_features"] = report.gap_features;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows)
        j["rows"].push_back({{"quantity", row.quantity},
                             {"domain_a", row.domain_a},
                             {"domain_b", row.domain_b},
                             {"value", row.value},
                             {"gamma", row.gamma}});
    write_text(out / "gaps.json", j.dump(1) + "\n");

    std::cout << to_csv(report);
    std::cout << "wrote " << (out / "gaps.csv").string() << " and gaps.json\n";
    return 0;
}

int cmd_verify(const std::string& filter, bool break_scan) {
    VerifyOptions opts;
    opts.filter = filter;
    opts.break_scan = break_scan;
    const std::vector<CheckResult> results = run_verification(opts);
    if (results.empty()) {
        std::cerr << "no checks match filter '" << filter << "'\n";
        return 2;
    }
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " — " << r.detail
                  << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "all checks passed\n" : "CHECKS FAILED\n");
    return all_pass ? 0 : 1;
}

double time_ns_per_token(const std::function<void()>& fn, std::size_t L) {
    using clock = std::chrono::steady_clock;
    // warm up once, then repeat until the sample is at least ~20 ms long
    fn();
    double best = 1e300;
    for (int sample = 0; sample < 3; ++sample) {
        std::size_t reps = 0;
        const auto t0 = clock::now();
        double elapsed = 0.0;
        do {
            fn();
            ++reps;
            elapsed = std::chrono::duration<double>(clock::now() - t0).count();
        } while (elapsed < 0.02);
        best = std::min(best, elapsed * 1e9 / (static_cast<double>(reps) *
                                               static_cast<double>(L)));
    }
    return best;
}

int cmd_bench(const std::string& out_dir) {
    Rng rng(424242);
    const std::size_t D = 8, N = 8;
    std::string csv = "L,variant,ns_per_token\n";
    std::vector<double> seq_ns;
    double seq_16k = 0.0, par_16k = 0.0;
    for (std::size_t L : {256u, 1024u, 4096u, 16384u}) {
        auto p = verify_detail::random_params(rng, D, N);
        auto x = verify_detail::random_seq(rng, L, D);
        Projections proj = project_params(x, p);
        DiscretizedOperators ops = discretize(proj.delta_raw, proj.B, p);
        ops.C = proj.C;
        const double ns_seq =
            time_ns_per_token([&] { scan_sequential(ops, x); }, L);
        const double ns_par =
            time_ns_per_token([&] { scan_parallel(ops, x); }, L);
        csv += std::to_string(L) + ",sequential," + format_double(ns_seq) + "\n";
        csv += std::to_string(L) + ",parallel," + format_double(ns_par) + "\n";
        seq_ns.push_back(ns_seq);
        if (L == 16384u) {
            seq_16k = ns_seq;
            par_16k = ns_par;
        }
    }
    std::cout << csv;
    if (!out_dir.empty()) {
        prepare_out_dir(out_dir, true);
        write_text(fs::path(out_dir) / "bench.csv", csv);
        std::cout << "wrote " << (fs::path(out_dir) / "bench.csv").string() << "\n";
    }
    const double spread = *std::max_element(seq_ns.begin(), seq_ns.end()) /
                          *std::min_element(seq_ns.begin(), seq_ns.end());
    std::cout << "sequential ns/token spread across L: "
              << format_double(spread) << "x (must stay under 2x)\n";
    std::cout << "parallel vs sequential at L=16384: "
              << format_double(par_16k / seq_16k)
              << "x (informational; single-thread overhead expected)\n";
    if (spread >= 2.0) {
        std::cerr << "FAIL: sequential scan is not linear in L\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective-scan domain generalization toolkit"};
    app.require_subcommand(1);

    TrainArgs targs;
    auto* train = app.add_subcommand("train", "run the leave-one-domain-out benchmark");
    train->add_option("--config", targs.config_path, "experiment config file")
        ->required();
    train->add_option("--out", targs.out_dir, "output directory")->required();
    train->add_option("--variant", targs.variant,
                      "augmentation variant: none|start-m|start-x|random-token|full-seq");
    train->add_option("--p-token", targs.p_token, "fraction of tokens to augment");
    train->add_option("--apply-prob", targs.apply_prob,
                      "per-sample augmentation probability");
    train->add_option("--seed", targs.seed, "base training seed");
    train->add_option("--seeds", targs.num_seeds, "number of seeds (0..N-1)");
    train->add_flag("--force", targs.force, "reuse a non-empty output directory");

    GapArgs gargs;
    auto* gap = app.add_subcommand("analyze-gap",
                                   "token-level domain gaps of a trained model");
    gap->add_option("--model", gargs.model_path, "model file from train")->required();
    gap->add_option("--config", gargs.config_path, "experiment config file")
        ->required();
    gap->add_option("--out", gargs.out_dir, "output directory")->required();
    gap->add_option("--layer", gargs.layer, "block index to analyze");
    gap->add_option("--gamma", gargs.gamma, "kernel bandwidth: 'median' or a number");
    gap->add_option("--max-samples", gargs.max_samples, "per-domain sample cap");
    gap->add_flag("--self-split", gargs.self_split,
                  "compare two halves of one domain (no-gap control)");

    std::string filter;
    bool break_scan = false;
    auto* verify = app.add_subcommand("verify", "run the invariant check suite");
    verify->add_option("--filter", filter, "run only checks whose name contains this");
    verify->add_flag("--break-scan", break_scan,
                     "fault injection: perturb the parallel scan output");

    std::string bench_out;
    auto* bench = app.add_subcommand("bench", "scan micro-benchmarks over L");
    bench->add_option("--out", bench_out, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(targs);
        if (gap->parsed()) return cmd_analyze_gap(gargs);
        if (verify->parsed()) return cmd_verify(filter, break_scan);
        if (bench->parsed()) return cmd_bench(bench_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
