#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "ssdg/model.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    require(data.size() == m.data.size(), "model file: matrix payload size mismatch");
    m.data = data;
    return m;
}

inline nlohmann::json block_to_json(const SelectiveLayerParams& p) {
    nlohmann::json j;
    j["A_log"] = matrix_to_json(p.A_log);
    j["W_B"] = matrix_to_json(p.W_B);
    j["b_B"] = p.b_B;
    j["W_C"] = matrix_to_json(p.W_C);
    j["b_C"] = p.b_C;
    j["W_delta"] = matrix_to_json(p.W_delta);
    j["b_delta"] = p.b_delta;
    return j;
}

inline SelectiveLayerParams block_from_json(const nlohmann::json& j) {
    SelectiveLayerParams p;
    p.A_log = matrix_from_json(j.at("A_log"));
    p.W_B = matrix_from_json(j.at("W_B"));
    p.b_B = j.at("b_B").get<Vec>();
    p.W_C = matrix_from_json(j.at("W_C"));
    p.b_C = j.at("b_C").get<Vec>();
    p.W_delta = matrix_from_json(j.at("W_delta"));
    p.b_delta = j.at("b_delta").get<Vec>();
    p.validate();
    return p;
}

}  // namespace detail

inline nlohmann::json model_to_json(const Model& m) {
    nlohmann::json j;
    j["format"] = "ssdg-model-v1";
    j["depth"] = m.cfg.depth;
    j["channels"] = m.cfg.D;
    j["state_dim"] = m.cfg.N;
    j["num_classes"] = m.cfg.num_classes;
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : m.blocks) j["blocks"].push_back(detail::block_to_json(b));
    j["W_cls"] = detail::matrix_to_json(m.W_cls);
    j["b_cls"] = m.b_cls;
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == std::string("ssdg-model-v1"),
            "model file: unknown format tag");
    Model m;
    m.cfg.depth = j.at("depth").get<std::size_t>();
    m.cfg.D = j.at("channels").get<std::size_t>();
    m.cfg.N = j.at("state_dim").get<std::size_t>();
    m.cfg.num_classes = j.at("num_classes").get<std::size_t>();
    m.cfg.validate();
    for (const auto& bj : j.at("blocks")) m.blocks.push_back(detail::block_from_json(bj));
    require(m.blocks.size() == m.cfg.depth, "model file: block count mismatch");
    for (const auto& b : m.blocks)
        require(b.channels() == m.cfg.D && b.state_dim() == m.cfg.N,
                "model file: block shape mismatch");
    m.W_cls = detail::matrix_from_json(j.at("W_cls"));
    m.b_cls = j.at("b_cls").get<Vec>();
    require(m.W_cls.rows == m.cfg.D && m.W_cls.cols == m.cfg.num_classes &&
                m.b_cls.size() == m.cfg.num_classes,
            "model file: classifier shape mismatch");
    return m;
}

inline void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "save_model: cannot open " + path);
    out << model_to_json(m).dump(1) << "\n";
    require(out.good(), "save_model: write failed for " + path);
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_model: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

}  // namespace ssdg
