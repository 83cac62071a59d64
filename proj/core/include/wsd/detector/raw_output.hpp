#pragma once

#include <span>
#include <vector>

#include "wsd/detector/config.hpp"

namespace wsd::detector {

/// Head output for one image. `grid` is laid out [row][col][anchor][channel]
/// (see ChannelLayout); `features` is the backbone feature map, [row][col][dim].
struct RawGridOutput {
    int grid_size = 0;
    int num_anchors = 0;
    int channels = 0;
    int embedding_dim = 0;
    std::vector<double> grid;
    std::vector<double> features;

    static RawGridOutput zeros(const DetectorConfig& config);

    std::size_t index(int row, int col, int anchor, int channel) const {
        return ((static_cast<std::size_t>(row) * grid_size + col) * num_anchors + anchor) * channels + channel;
    }
    double& at(int row, int col, int anchor, int channel) { return grid[index(row, col, anchor, channel)]; }
    double at(int row, int col, int anchor, int channel) const { return grid[index(row, col, anchor, channel)]; }

    std::span<const double> anchor_values(int row, int col, int anchor) const {
        return {grid.data() + index(row, col, anchor, 0), static_cast<std::size_t>(channels)};
    }
    std::span<const double> feature(int row, int col) const {
        return {features.data() + (static_cast<std::size_t>(row) * grid_size + col) * embedding_dim,
                static_cast<std::size_t>(embedding_dim)};
    }

    bool all_finite() const;
    bool same_shape(const RawGridOutput& other) const;
};

}  // namespace wsd::detector
