#pragma once

#include <string>
#include <vector>

namespace wsd::detector {

struct Anchor {
    double width = 0.0;
    double height = 0.0;

    friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// One 3x3 convolution stage of the backbone.
struct StageConfig {
    int channels = 0;
    int stride = 1;

    friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

/// Per-anchor channel layout of the raw grid: objectness, four box offsets,
/// num_classes class logits, then the two stem offsets.
struct ChannelLayout {
    int num_classes = 0;

    static constexpr int objectness = 0;
    static constexpr int tx = 1;
    static constexpr int ty = 2;
    static constexpr int tw = 3;
    static constexpr int th = 4;
    static constexpr int class_begin = 5;
    int stem_x() const { return class_begin + num_classes; }
    int stem_y() const { return class_begin + num_classes + 1; }
    int size() const { return class_begin + num_classes + 2; }
};

struct DetectorConfig {
    int input_size = 128;
    int grid_size = 8;
    std::vector<Anchor> anchors;
    int num_classes = 4;
    int embedding_dim = 64;
    std::vector<StageConfig> stages;
    double leaky_slope = 0.1;
    /// Prior objectness logit at initialization.
    double objectness_bias_init = -4.0;

    int num_anchors() const { return static_cast<int>(anchors.size()); }
    double cell_size() const { return static_cast<double>(input_size) / grid_size; }
    ChannelLayout channels() const { return {num_classes}; }

    /// Throws ConfigError when any invariant is broken.
    void validate() const;

    friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

/// Backbone of six 3x3 stages whose total stride is 16 (inputs below 256 px)
/// or 32, with anchors sized for the synthetic field generator.
DetectorConfig default_detector_config(int input_size = 128);

}  // namespace wsd::detector
