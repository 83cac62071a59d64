#pragma once

// nlohmann adapters for the configuration types. Private to the core library.

#include "json.hpp"
#include "wsd/detector/config.hpp"

namespace wsd::detector {

inline void to_json(nlohmann::json& j, const Anchor& a) {
    j = nlohmann::json::array({a.width, a.height});
}
inline void from_json(const nlohmann::json& j, Anchor& a) {
    a.width = j.at(0).get<double>();
    a.height = j.at(1).get<double>();
}
inline void to_json(nlohmann::json& j, const StageConfig& s) {
    j = nlohmann::json{{"channels", s.channels}, {"stride", s.stride}};
}
inline void from_json(const nlohmann::json& j, StageConfig& s) {
    s.channels = j.at("channels").get<int>();
    s.stride = j.at("stride").get<int>();
}
inline void to_json(nlohmann::json& j, const DetectorConfig& c) {
    j = nlohmann::json{{"input_size", c.input_size},   {"grid_size", c.grid_size},
                       {"anchors", c.anchors},         {"num_classes", c.num_classes},
                       {"embedding_dim", c.embedding_dim}, {"stages", c.stages},
                       {"leaky_slope", c.leaky_slope}, {"objectness_bias_init", c.objectness_bias_init}};
}
inline void from_json(const nlohmann::json& j, DetectorConfig& c) {
    DetectorConfig d;
    c.input_size = j.value("input_size", d.input_size);
    c.grid_size = j.value("grid_size", d.grid_size);
    c.anchors = j.value("anchors", d.anchors);
    c.num_classes = j.value("num_classes", d.num_classes);
    c.embedding_dim = j.value("embedding_dim", d.embedding_dim);
    c.stages = j.value("stages", d.stages);
    c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
    c.objectness_bias_init = j.value("objectness_bias_init", d.objectness_bias_init);
}

}  // namespace wsd::detector
