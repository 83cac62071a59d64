#pragma once

#include <cstdint>
#include <optional>

#include "wsd/data/sample.hpp"

namespace wsd::data {

/// Stem displacement from the box center, as a fraction of the box size
/// ((w + h) / 2). The direction is uniform on the circle.
struct StemOffsetDistribution {
    double mean = 0.2;
    double spread = 0.05;
};

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    int image_size = 128;
    int crop_count = 2;
    int weed_count = 3;
    StemOffsetDistribution stem_offset;
    double clutter_level = 0.3;
    /// Plant box side range as a fraction of image_size.
    double min_plant_fraction = 0.16;
    double max_plant_fraction = 0.30;
    /// Fix every crop to one species; random per plant when unset.
    std::optional<ClassId> crop_class;
};

void validate(const SyntheticSceneSpec& spec);

/// Deterministic in `spec`. Throws CapacityError when the requested plants
/// cannot be placed without center collisions.
ImageSample generate_scene(const SyntheticSceneSpec& spec);

}  // namespace wsd::data
