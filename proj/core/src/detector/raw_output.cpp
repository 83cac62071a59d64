#include "wsd/detector/raw_output.hpp"

#include <algorithm>
#include <cmath>

namespace wsd::detector {

RawGridOutput RawGridOutput::zeros(const DetectorConfig& config) {
    RawGridOutput r;
    r.grid_size = config.grid_size;
    r.num_anchors = config.num_anchors();
    r.channels = config.channels().size();
    r.embedding_dim = config.embedding_dim;
    const auto cells = static_cast<std::size_t>(r.grid_size) * r.grid_size;
    r.grid.assign(cells * r.num_anchors * r.channels, 0.0);
    r.features.assign(cells * r.embedding_dim, 0.0);
    return r;
}

bool RawGridOutput::all_finite() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(grid.begin(), grid.end(), finite) && std::all_of(features.begin(), features.end(), finite);
}

bool RawGridOutput::same_shape(const RawGridOutput& other) const {
    return grid_size == other.grid_size && num_anchors == other.num_anchors && channels == other.channels &&
           embedding_dim == other.embedding_dim && grid.size() == other.grid.size();
}

}  // namespace wsd::detector
