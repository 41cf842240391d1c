#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "rgt/model.hpp"

namespace rgt {

// JSON schema mirrors the ModelConfig fields one-to-one (snake_case keys,
// win nested as {"wh", "ww"}); unknown keys are rejected.
inline ModelConfig config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "n1", "n2", "c", "heads", "mlp_ratio", "win", "s_r", "h", "c_r",
        "scale", "hai_enabled", "skip_mode", "recursion_enabled"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key: " + key);
    }
    for (const std::string& key : known) {
        if (!j.contains(key)) throw ConfigError("missing config key: " + key);
    }
    const auto& win = j.at("win");
    if (!win.is_object()) throw ConfigError("win must be an object {wh, ww}");
    for (const auto& [key, value] : win.items()) {
        if (key != "wh" && key != "ww") throw ConfigError("unknown win key: " + key);
    }
    if (!win.contains("wh") || !win.contains("ww")) throw ConfigError("win needs wh and ww");

    ModelConfig cfg;
    try {
        cfg.num_groups = j.at("n1").get<int64_t>();
        cfg.blocks_per_group = j.at("n2").get<int64_t>();
        cfg.embed_dim = j.at("c").get<int64_t>();
        cfg.heads = j.at("heads").get<int64_t>();
        cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
        cfg.win.wh = win.at("wh").get<int64_t>();
        cfg.win.ww = win.at("ww").get<int64_t>();
        cfg.stride = j.at("s_r").get<int64_t>();
        cfg.rep_size = j.at("h").get<int64_t>();
        cfg.channel_factor = j.at("c_r").get<double>();
        cfg.scale = j.at("scale").get<int64_t>();
        cfg.hai_enabled = j.at("hai_enabled").get<bool>();
        cfg.recursion_enabled = j.at("recursion_enabled").get<bool>();
        std::string skip = j.at("skip_mode").get<std::string>();
        if (skip == "none") cfg.skip_mode = SkipMode::None;
        else if (skip == "vanilla") cfg.skip_mode = SkipMode::Vanilla;
        else if (skip == "hai") cfg.skip_mode = SkipMode::Hai;
        else throw ConfigError("skip_mode must be none, vanilla or hai");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["n1"] = cfg.num_groups;
    j["n2"] = cfg.blocks_per_group;
    j["c"] = cfg.embed_dim;
    j["heads"] = cfg.heads;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["win"] = {{"wh", cfg.win.wh}, {"ww", cfg.win.ww}};
    j["s_r"] = cfg.stride;
    j["h"] = cfg.rep_size;
    j["c_r"] = cfg.channel_factor;
    j["scale"] = cfg.scale;
    j["hai_enabled"] = cfg.hai_enabled;
    j["skip_mode"] = skip_mode_name(cfg.skip_mode);
    j["recursion_enabled"] = cfg.recursion_enabled;
    return j;
}

inline ModelConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// the two published configurations
inline ModelConfig rgt_s_config(int64_t scale = 4) {
    ModelConfig cfg;
    cfg.scale = scale;
    return cfg;
}

inline ModelConfig rgt_config(int64_t scale = 4) {
    ModelConfig cfg;
    cfg.num_groups = 8;
    cfg.scale = scale;
    return cfg;
}

} // namespace rgt
