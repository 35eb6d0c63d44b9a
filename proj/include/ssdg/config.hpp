#pragma once

#include <ctime>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "ssdg/synth.hpp"
#include "ssdg/train.hpp"

namespace ssdg {

// Everything one experiment needs. The model always takes its channel count
// and class count from the data section.
struct ExperimentConfig {
    SynthDGConfig data;
    ModelConfig model;
    TrainConfig train;

    void sync_and_validate() {
        model.D = data.D;
        model.num_classes = data.num_classes;
        data.validate();
        model.validate();
        train.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        require(pos == v.size(), "config: trailing junk in value for " + key);
        return x;
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("config: bad number for " + key + ": " + v);
    }
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        require(pos == v.size() && v.find('-') == std::string::npos,
                "config: bad non-negative integer for " + key + ": " + v);
        return x;
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("config: bad integer for " + key + ": " + v);
    }
}

inline void apply_kv(ExperimentConfig& cfg, const std::string& section,
                     const std::string& key, const std::string& value) {
    const std::string full = section.empty() ? key : section + "." + key;
    if (section == "data") {
        if (key == "num_domains") cfg.data.num_domains = parse_uint(value, full);
        else if (key == "num_classes") cfg.data.num_classes = parse_uint(value, full);
        else if (key == "seq_len") cfg.data.L = parse_uint(value, full);
        else if (key == "channels") cfg.data.D = parse_uint(value, full);
        else if (key == "samples_per_domain_per_class")
            cfg.data.samples_per_domain_per_class = parse_uint(value, full);
        else if (key == "domain_style_strength")
            cfg.data.domain_style_strength = parse_real(value, full);
        else if (key == "noise_std") cfg.data.noise_std = parse_real(value, full);
        else if (key == "seed") cfg.data.seed = parse_uint(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "model") {
        if (key == "depth") cfg.model.depth = parse_uint(value, full);
        else if (key == "state_dim") cfg.model.N = parse_uint(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "train") {
        if (key == "epochs") cfg.train.epochs = parse_uint(value, full);
        else if (key == "batch_size") cfg.train.batch_size = parse_uint(value, full);
        else if (key == "lr0") cfg.train.lr0 = parse_real(value, full);
        else if (key == "lr_min") cfg.train.lr_min = parse_real(value, full);
        else if (key == "weight_decay") cfg.train.weight_decay = parse_real(value, full);
        else if (key == "beta1") cfg.train.beta1 = parse_real(value, full);
        else if (key == "beta2") cfg.train.beta2 = parse_real(value, full);
        else if (key == "adam_eps") cfg.train.adam_eps = parse_real(value, full);
        else if (key == "seed") cfg.train.seed = parse_uint(value, full);
        else throw std::invalid_argument("config: unknown key " + full);
    } else if (section == "augment") {
        if (key == "variant") cfg.train.policy.variant = variant_from_string(value);
        else if (key == "p_token") cfg.train.policy.p_token = parse_real(value, full);
        else if (key == "apply_prob")
            cfg.train.policy.apply_prob = parse_real(value, full);
        else if (key == "beta_param") {
            cfg.train.policy.beta_a = parse_real(value, full);
            cfg.train.policy.beta_b = cfg.train.policy.beta_a;
        } else throw std::invalid_argument("config: unknown key " + full);
    } else {
        throw std::invalid_argument("config: unknown section [" + section + "]");
    }
}

inline ExperimentConfig parse_flat_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos,
                "config: line " + std::to_string(lineno) + " is not key = value");
        apply_kv(cfg, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig parse_json_config(const std::string& text) {
    ExperimentConfig cfg;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: bad JSON: ") + e.what());
    }
    for (const auto& [section, body] : j.items()) {
        require(body.is_object(), "config: section " + section + " must be an object");
        for (const auto& [key, value] : body.items()) {
            std::string v;
            if (value.is_string()) v = value.get<std::string>();
            else v = value.dump();
            apply_kv(cfg, section, key, v);
        }
    }
    return cfg;
}

}  // namespace detail

// Flat "key = value" sections or a JSON object with the same section names.
inline ExperimentConfig parse_config(const std::string& text) {
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
        ExperimentConfig cfg = c == '{' ? detail::parse_json_config(text)
                                        : detail::parse_flat_config(text);
        cfg.sync_and_validate();
        return cfg;
    }
    ExperimentConfig cfg;  // empty file: all defaults
    cfg.sync_and_validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config file not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

// Snapshot of the resolved configuration, embedded in the run manifest.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["data"] = {{"num_domains", cfg.data.num_domains},
                 {"num_classes", cfg.data.num_classes},
                 {"seq_len", cfg.data.L},
                 {"channels", cfg.data.D},
                 {"samples_per_domain_per_class", cfg.data.samples_per_domain_per_class},
                 {"domain_style_strength", cfg.data.domain_style_strength},
                 {"noise_std", cfg.data.noise_std},
                 {"seed", cfg.data.seed}};
    j["model"] = {{"depth", cfg.model.depth}, {"state_dim", cfg.model.N}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr0", cfg.train.lr0},
                  {"lr_min", cfg.train.lr_min},
                  {"weight_decay", cfg.train.weight_decay},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"seed", cfg.train.seed}};
    j["augment"] = {{"variant", to_string(cfg.train.policy.variant)},
                    {"p_token", cfg.train.policy.p_token},
                    {"apply_prob", cfg.train.policy.apply_prob},
                    {"beta_param", cfg.train.policy.beta_a}};
    return j;
}

inline std::string now_iso8601_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Written before training begins and never touched afterward; the end
// timestamp field deliberately stays empty (completion is signaled by the
// summary file, keeping the manifest immutable).
struct RunManifest {
    std::string tool_version;
    std::string start_timestamp;
    std::string end_timestamp;
    ExperimentConfig config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> output_paths;
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["tool_version"] = m.tool_version;
    j["start_timestamp"] = m.start_timestamp;
    j["end_timestamp"] = m.end_timestamp;
    j["config"] = config_to_json(m.config);
    j["seeds"] = m.seeds;
    j["output_paths"] = m.output_paths;
    return j;
}

}  // namespace ssdg
