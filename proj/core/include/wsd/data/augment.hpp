#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>

#include "wsd/data/sample.hpp"
#include "wsd/geometry.hpp"

namespace wsd::data {

enum class AugmentationKind { weak, strong };
enum class Flip { horizontal, vertical };

struct AugmentationRecipe {
    AugmentationKind kind = AugmentationKind::weak;
    double brightness_delta = 0.0;  ///< fraction of full scale, added
    double contrast_factor = 1.0;   ///< gain around mid-gray
    std::optional<Box> crop_window; ///< source pixels, resized back to full frame
    std::optional<Flip> flip;

    /// Compact textual identity, stable across runs.
    std::string id() const;
};

/// Sampling ranges for random recipes.
struct AugmentationRanges {
    double brightness = 0.2;
    double contrast_min = 0.8;
    double contrast_max = 1.25;
    double crop_area_min = 0.6;
    double crop_area_max = 0.9;
    double flip_probability = 0.5;
};

void validate(const AugmentationRecipe& recipe, int width, int height);

AugmentationRecipe sample_recipe(AugmentationKind kind, int width, int height, std::mt19937_64& rng,
                                 const AugmentationRanges& ranges = {});

/// Geometric part of a recipe: crop-and-resize followed by an optional flip.
class GeometricMap {
public:
    GeometricMap() = default;
    GeometricMap(int width, int height, std::optional<Box> window, std::optional<Flip> flip);

    Point to_augmented(const Point& p) const;
    Point to_original(const Point& p) const;
    Box to_augmented(const Box& b) const;
    Box to_original(const Box& b) const;

    const Box& window() const { return window_; }
    bool is_identity() const;

private:
    int width_ = 0;
    int height_ = 0;
    Box window_;
    std::optional<Flip> flip_;
};

/// Returns the augmented sample and the map whose `to_original` takes
/// augmented-space points back to the input frame. Instances fully outside the
/// crop window, and weeds whose stem leaves the window, are dropped.
std::pair<ImageSample, GeometricMap> apply_augmentation(const ImageSample& sample,
                                                        const AugmentationRecipe& recipe);

/// Resamples a whole sample to size x size, scaling annotations.
ImageSample resize_sample(const ImageSample& sample, int size);

}  // namespace wsd::data
