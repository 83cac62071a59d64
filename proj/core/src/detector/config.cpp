#include "wsd/detector/config.hpp"

#include <string>

#include "wsd/data/sample.hpp"
#include "wsd/errors.hpp"

namespace wsd::detector {

void DetectorConfig::validate() const {
    if (input_size <= 0 || grid_size <= 0 || input_size % grid_size != 0) {
        throw ConfigError("detector: input_size " + std::to_string(input_size) + " is not divisible by grid_size " +
                          std::to_string(grid_size));
    }
    if (anchors.empty()) {
        throw ConfigError("detector: at least one anchor is required");
    }
    for (const auto& a : anchors) {
        if (!(a.width > 0.0 && a.height > 0.0)) {
            throw ConfigError("detector: anchor dimensions must be > 0");
        }
    }
    if (num_classes < 2 || num_classes > data::kNumClasses) {
        throw ConfigError("detector: num_classes must lie in [2, " + std::to_string(data::kNumClasses) + "]");
    }
    if (stages.empty()) {
        throw ConfigError("detector: backbone needs at least one stage");
    }
    long stride = 1;
    for (const auto& s : stages) {
        if (s.channels <= 0 || s.stride <= 0) {
            throw ConfigError("detector: stage channels and stride must be > 0");
        }
        stride *= s.stride;
    }
    if (stride * grid_size != input_size) {
        throw ConfigError("detector: backbone stride " + std::to_string(stride) + " does not map input_size " +
                          std::to_string(input_size) + " onto grid_size " + std::to_string(grid_size));
    }
    if (embedding_dim != stages.back().channels) {
        throw ConfigError("detector: embedding_dim must equal the last stage width");
    }
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
        throw ConfigError("detector: leaky_slope must lie in [0, 1)");
    }
}

DetectorConfig default_detector_config(int input_size) {
    DetectorConfig c;
    c.input_size = input_size;
    if (input_size >= 256) {
        c.stages = {{8, 2}, {16, 2}, {32, 2}, {48, 2}, {64, 2}, {64, 1}};
        c.grid_size = input_size / 32;
    } else {
        c.stages = {{8, 2}, {16, 2}, {32, 2}, {48, 2}, {64, 1}, {64, 1}};
        c.grid_size = input_size / 16;
    }
    c.embedding_dim = c.stages.back().channels;
    const double n = input_size;
    c.anchors = {{0.19 * n, 0.19 * n}, {0.27 * n, 0.27 * n}};
    c.num_classes = data::kNumClasses;
    return c;
}

}  // namespace wsd::detector
