#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#ifndef SSDG_CLI_PATH
#error "SSDG_CLI_PATH must point at the command line binary"
#endif

namespace {

struct CliResult {
    int status = -1;
    std::string out;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
    CliResult r;
    const std::string cmd = std::string(SSDG_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
        r.out.append(buf, n);
    const int rc = pclose(pipe);
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return r;
}

std::string make_temp_dir() {
    char tmpl[] = "/tmp/ssdg-cli-test-XXXXXX";
    const char* dir = mkdtemp(tmpl);
    EXPECT_NE(dir, nullptr);
    return dir;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    ASSERT_TRUE(out.good()) << path;
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in.good()) << path;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return in.good();
}

// small and fast: three domains, two classes, two epochs
const char* kTinyConfig = R"([data]
num_domains = 3
num_classes = 2
seq_len = 8
channels = 3
samples_per_domain_per_class = 6
domain_style_strength = 0.5
noise_std = 0.15
seed = 0

[model]
depth = 2
state_dim = 2

[train]
epochs = 2
batch_size = 16
lr0 = 0.002
seed = 0

[augment]
variant = start-m
)";

// one trained setup shared by the tests below (training twice per test would
// dominate the suite's runtime)
struct TrainedFixture {
    std::string root = make_temp_dir();
    std::string config = root + "/exp.ini";
    std::string out = root + "/run";
    CliResult result;

    TrainedFixture() {
        write_file(config, kTinyConfig);
        result = run_cli("train --config " + config + " --out " + out + " --seeds 1");
    }
};

TrainedFixture& trained() {
    static TrainedFixture fixture;
    return fixture;
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
    EXPECT_EQ(run_cli("").status, 2);
    EXPECT_EQ(run_cli("frobnicate").status, 2);
}

TEST(Cli, HelpExitsZero) {
    CliResult r = run_cli("--help");
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("train"), std::string::npos);
    EXPECT_NE(r.out.find("verify"), std::string::npos);
}

TEST(Cli, MissingConfigFileExits2AndNamesThePath) {
    const std::string dir = make_temp_dir();
    CliResult r = run_cli("train --config /no/such/file.ini --out " + dir + "/x");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("/no/such/file.ini"), std::string::npos);
}

TEST(Cli, BadConfigKeyExits2) {
    const std::string dir = make_temp_dir();
    write_file(dir + "/bad.ini", "[data]\nnum_domain = 3\n");
    CliResult r = run_cli("train --config " + dir + "/bad.ini --out " + dir + "/x");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("num_domain"), std::string::npos);
}

TEST(Cli, ZeroEpochsRejected) {
    const std::string dir = make_temp_dir();
    write_file(dir + "/cfg.ini", std::string(kTinyConfig) + "[train]\nepochs = 0\n");
    CliResult r = run_cli("train --config " + dir + "/cfg.ini --out " + dir + "/x");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("epochs"), std::string::npos);
}

TEST(Cli, TrainWritesArtifacts) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    EXPECT_TRUE(file_exists(f.out + "/manifest.json"));
    EXPECT_TRUE(file_exists(f.out + "/metrics.csv"));
    EXPECT_TRUE(file_exists(f.out + "/summary.json"));
    for (const char* dom : {"d0", "d1", "d2"})
        EXPECT_TRUE(file_exists(f.out + "/models/start-m_holdout-" + std::string(dom) +
                                "_seed0.json"));

    const std::string metrics = read_file(f.out + "/metrics.csv");
    EXPECT_EQ(metrics.rfind("seed,held_out_domain,variant,epoch,train_loss,target_acc\n",
                            0),
              0u);
    // 3 held-out domains x 1 seed x 2 epochs data rows + header
    std::size_t lines = 0;
    for (char c : metrics) lines += c == '\n';
    EXPECT_EQ(lines, 7u);

    nlohmann::json summary = nlohmann::json::parse(read_file(f.out + "/summary.json"));
    EXPECT_EQ(summary["variant"], "start-m");
    const double mean = summary["overall"]["mean"].get<double>();
    EXPECT_GE(mean, 0.0);
    EXPECT_LE(mean, 1.0);
    ASSERT_EQ(summary["per_domain"].size(), 3u);
    for (const auto& d : summary["per_domain"])
        EXPECT_EQ(d["per_seed"].size(), 1u);

    nlohmann::json manifest = nlohmann::json::parse(read_file(f.out + "/manifest.json"));
    EXPECT_EQ(manifest["config"]["augment"]["variant"], "start-m");
    EXPECT_EQ(manifest["seeds"].size(), 1u);
    EXPECT_EQ(manifest["end_timestamp"], "");
}

TEST(Cli, RerunIsByteIdentical) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    const std::string dir2 = make_temp_dir();
    CliResult r =
        run_cli("train --config " + f.config + " --out " + dir2 + "/run --seeds 1");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(read_file(f.out + "/summary.json"), read_file(dir2 + "/run/summary.json"));
    EXPECT_EQ(read_file(f.out + "/metrics.csv"), read_file(dir2 + "/run/metrics.csv"));
    EXPECT_EQ(read_file(f.out + "/models/start-m_holdout-d0_seed0.json"),
              read_file(dir2 + "/run/models/start-m_holdout-d0_seed0.json"));
}

TEST(Cli, JsonConfigBehavesLikeFlatConfig) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    const std::string dir = make_temp_dir();
    write_file(dir + "/exp.json", R"({
  "data": {"num_domains": 3, "num_classes": 2, "seq_len": 8, "channels": 3,
            "samples_per_domain_per_class": 6, "domain_style_strength": 0.5,
            "noise_std": 0.15, "seed": 0},
  "model": {"depth": 2, "state_dim": 2},
  "train": {"epochs": 2, "batch_size": 16, "lr0": 0.002, "seed": 0},
  "augment": {"variant": "start-m"}
})");
    CliResult r =
        run_cli("train --config " + dir + "/exp.json --out " + dir + "/run --seeds 1");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(read_file(f.out + "/summary.json"), read_file(dir + "/run/summary.json"));
}

TEST(Cli, VariantOverrideLandsInManifest) {
    const std::string dir = make_temp_dir();
    write_file(dir + "/exp.ini", kTinyConfig);
    CliResult r = run_cli("train --config " + dir + "/exp.ini --out " + dir +
                          "/run --seeds 1 --variant none");
    ASSERT_EQ(r.status, 0) << r.out;
    nlohmann::json manifest =
        nlohmann::json::parse(read_file(dir + "/run/manifest.json"));
    EXPECT_EQ(manifest["config"]["augment"]["variant"], "none");
    EXPECT_TRUE(file_exists(dir + "/run/models/none_holdout-d0_seed0.json"));
}

TEST(Cli, NonEmptyOutDirNeedsForce) {
    const std::string dir = make_temp_dir();
    write_file(dir + "/exp.ini", kTinyConfig);
    write_file(dir + "/run", "");  // occupy the path with a file first
    CliResult r =
        run_cli("train --config " + dir + "/exp.ini --out " + dir + "/run --seeds 1");
    EXPECT_EQ(r.status, 2);

    const std::string dir2 = make_temp_dir();
    write_file(dir2 + "/exp.ini", kTinyConfig);
    CliResult first =
        run_cli("train --config " + dir2 + "/exp.ini --out " + dir2 + "/run --seeds 1");
    ASSERT_EQ(first.status, 0) << first.out;
    CliResult second =
        run_cli("train --config " + dir2 + "/exp.ini --out " + dir2 + "/run --seeds 1");
    EXPECT_EQ(second.status, 2);
    EXPECT_NE(second.out.find("--force"), std::string::npos);
    CliResult forced = run_cli("train --config " + dir2 + "/exp.ini --out " + dir2 +
                               "/run --seeds 1 --force");
    EXPECT_EQ(forced.status, 0) << forced.out;
}

TEST(Cli, AnalyzeGapWritesReportAndSelfSplitIsSmaller) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    const std::string model = f.out + "/models/start-m_holdout-d0_seed0.json";

    const std::string cross_dir = make_temp_dir();
    CliResult cross = run_cli("analyze-gap --model " + model + " --config " + f.config +
                              " --out " + cross_dir + " --layer 1");
    ASSERT_EQ(cross.status, 0) << cross.out;
    EXPECT_TRUE(file_exists(cross_dir + "/gaps.csv"));
    const std::string csv = read_file(cross_dir + "/gaps.csv");
    EXPECT_EQ(csv.rfind("quantity,domain_a,domain_b,value,gamma", 0), 0u);
    nlohmann::json cross_j = nlohmann::json::parse(read_file(cross_dir + "/gaps.json"));

    const std::string self_dir = make_temp_dir();
    CliResult self = run_cli("analyze-gap --model " + model + " --config " + f.config +
                             " --out " + self_dir + " --layer 1 --self-split");
    ASSERT_EQ(self.status, 0) << self.out;
    nlohmann::json self_j = nlohmann::json::parse(read_file(self_dir + "/gaps.json"));

    // halves of one domain are a no-gap control: far below cross-domain gaps
    for (const char* q : {"gap_delta", "gap_B", "gap_C", "gap_features"}) {
        EXPECT_GE(self_j[q].get<double>(), 0.0);
        EXPECT_LT(self_j[q].get<double>(), cross_j[q].get<double>()) << q;
    }
}

TEST(Cli, AnalyzeGapFixedGammaIsDeterministic) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    const std::string model = f.out + "/models/start-m_holdout-d1_seed0.json";
    const std::string a = make_temp_dir(), b = make_temp_dir();
    CliResult ra = run_cli("analyze-gap --model " + model + " --config " + f.config +
                           " --out " + a + " --gamma 1.0");
    CliResult rb = run_cli("analyze-gap --model " + model + " --config " + f.config +
                           " --out " + b + " --gamma 1.0");
    ASSERT_EQ(ra.status, 0) << ra.out;
    ASSERT_EQ(rb.status, 0) << rb.out;
    EXPECT_EQ(read_file(a + "/gaps.csv"), read_file(b + "/gaps.csv"));
}

TEST(Cli, AnalyzeGapBadGammaExits2) {
    TrainedFixture& f = trained();
    ASSERT_EQ(f.result.status, 0) << f.result.out;
    const std::string model = f.out + "/models/start-m_holdout-d0_seed0.json";
    CliResult r = run_cli("analyze-gap --model " + model + " --config " + f.config +
                          " --out " + make_temp_dir() + " --gamma huge");
    EXPECT_EQ(r.status, 2);
}

TEST(Cli, VerifyFilterRunsSubset) {
    CliResult r = run_cli("verify --filter mmd.");
    EXPECT_EQ(r.status, 0) << r.out;
    std::istringstream lines(r.out);
    std::string line;
    std::size_t checks = 0;
    while (std::getline(lines, line)) {
        if (line.rfind("PASS ", 0) == 0 || line.rfind("FAIL ", 0) == 0) {
            ++checks;
            EXPECT_NE(line.find("mmd."), std::string::npos) << line;
        }
    }
    EXPECT_EQ(checks, 4u);
}

TEST(Cli, VerifyUnmatchedFilterExits2) {
    EXPECT_EQ(run_cli("verify --filter nosuchcheck").status, 2);
}

TEST(Cli, VerifyBreakScanFailsWithExit1) {
    CliResult r = run_cli("verify --break-scan --filter scan.three_way");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("FAIL scan.three_way_equivalence"), std::string::npos);
}
