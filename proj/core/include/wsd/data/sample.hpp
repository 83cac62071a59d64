#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wsd/data/image.hpp"
#include "wsd/geometry.hpp"

namespace wsd::data {

enum class ClassId : int { weed = 0, maize = 1, soybean = 2, mungbean = 3 };

inline constexpr int kNumClasses = 4;

std::string_view class_name(ClassId id);
std::optional<ClassId> parse_class(std::string_view name);

/// One annotated plant. Weeds carry a stem point, crops never do.
struct LabeledInstance {
    ClassId class_id = ClassId::weed;
    Box bbox;
    std::optional<Point> stem;

    bool is_weed() const { return class_id == ClassId::weed; }

    friend bool operator==(const LabeledInstance&, const LabeledInstance&) = default;
};

struct ImageSample {
    Image image;
    std::string id;
    std::vector<LabeledInstance> instances;
    bool labeled = true;

    friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

/// Throws ValidationError naming `context` when an invariant is broken.
void validate(const LabeledInstance& instance, int width, int height, std::string_view context = {});
void validate(const ImageSample& sample);

int count_weeds(const std::vector<LabeledInstance>& instances);

}  // namespace wsd::data
