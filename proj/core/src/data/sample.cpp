#include "wsd/data/sample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "wsd/errors.hpp"

namespace wsd::data {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {"weed", "maize", "soybean", "mungbean"};

std::string label(std::string_view context) {
    return context.empty() ? std::string("instance") : std::string(context);
}

}  // namespace

std::string_view class_name(ClassId id) {
    return kClassNames.at(static_cast<std::size_t>(id));
}

std::optional<ClassId> parse_class(std::string_view name) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (kClassNames[i] == name) {
            return static_cast<ClassId>(i);
        }
    }
    return std::nullopt;
}

void validate(const LabeledInstance& instance, int width, int height, std::string_view context) {
    const Box& b = instance.bbox;
    if (!std::isfinite(b.x_min) || !std::isfinite(b.y_min) || !std::isfinite(b.x_max) ||
        !std::isfinite(b.y_max)) {
        throw ValidationError(label(context) + ": non-finite box coordinate");
    }
    if (!b.valid()) {
        throw ValidationError(label(context) + ": degenerate box (need x_min < x_max and y_min < y_max)");
    }
    if (b.x_min < 0 || b.y_min < 0 || b.x_max > width || b.y_max > height) {
        throw ValidationError(label(context) + ": box outside image bounds");
    }
    if (instance.is_weed() != instance.stem.has_value()) {
        throw ValidationError(label(context) + (instance.is_weed() ? ": weed without stem point"
                                                                    : ": non-weed instance carries a stem point"));
    }
    if (instance.stem && !b.contains(*instance.stem)) {
        throw ValidationError(label(context) + ": stem point lies outside its box");
    }
}

void validate(const ImageSample& sample) {
    if (!sample.labeled && !sample.instances.empty()) {
        throw ValidationError(sample.id + ": unlabeled sample carries instances");
    }
    if (sample.image.pixels.size() != static_cast<std::size_t>(sample.image.width) * sample.image.height * 3) {
        throw ValidationError(sample.id + ": pixel buffer does not match image size");
    }
    for (std::size_t i = 0; i < sample.instances.size(); ++i) {
        validate(sample.instances[i], sample.image.width, sample.image.height,
                 sample.id + " object " + std::to_string(i));
    }
}

int count_weeds(const std::vector<LabeledInstance>& instances) {
    return static_cast<int>(std::count_if(instances.begin(), instances.end(),
                                          [](const LabeledInstance& inst) { return inst.is_weed(); }));
}

}  // namespace wsd::data
