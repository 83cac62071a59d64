#include "wsd/data/augment.hpp"

#include <cmath>
#include <sstream>

#include "wsd/errors.hpp"

namespace wsd::data {

namespace {

Box full_frame(int width, int height) {
    return {0.0, 0.0, static_cast<double>(width), static_cast<double>(height)};
}

void adjust_photometric(Image& img, double brightness_delta, double contrast_factor) {
    if (brightness_delta == 0.0 && contrast_factor == 1.0) {
        return;
    }
    const double offset = brightness_delta * 255.0;
    for (auto& v : img.pixels) {
        const double out = (v - 127.5) * contrast_factor + 127.5 + offset;
        v = static_cast<std::uint8_t>(std::clamp(std::lround(out), 0L, 255L));
    }
}

void flip_pixels(Image& img, Flip flip) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int sx = flip == Flip::horizontal ? img.width - 1 - x : x;
            const int sy = flip == Flip::vertical ? img.height - 1 - y : y;
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = img.at(sx, sy, c);
            }
        }
    }
    img = std::move(out);
}

Box normalized(const Point& a, const Point& b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

}  // namespace

std::string AugmentationRecipe::id() const {
    std::ostringstream ss;
    ss.precision(6);
    ss << (kind == AugmentationKind::weak ? "weak" : "strong") << ":b=" << brightness_delta << ",c=" << contrast_factor;
    if (crop_window) {
        ss << ",crop=" << crop_window->x_min << '/' << crop_window->y_min << '/' << crop_window->x_max << '/'
           << crop_window->y_max;
    }
    if (flip) {
        ss << ",flip=" << (*flip == Flip::horizontal ? 'h' : 'v');
    }
    return ss.str();
}

void validate(const AugmentationRecipe& recipe, int width, int height) {
    if (recipe.kind == AugmentationKind::weak && (recipe.crop_window || recipe.flip)) {
        throw ValidationError("weak augmentation must not crop or flip");
    }
    if (!(recipe.contrast_factor > 0.0) || !std::isfinite(recipe.brightness_delta)) {
        throw ValidationError("augmentation: contrast_factor must be > 0 and brightness finite");
    }
    if (recipe.crop_window) {
        const Box& w = *recipe.crop_window;
        if (!w.valid() || w.x_min < 0 || w.y_min < 0 || w.x_max > width || w.y_max > height) {
            throw ValidationError("augmentation: crop window exceeds image bounds");
        }
    }
}

AugmentationRecipe sample_recipe(AugmentationKind kind, int width, int height, std::mt19937_64& rng,
                                 const AugmentationRanges& ranges) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AugmentationRecipe r;
    r.kind = kind;
    r.brightness_delta = -ranges.brightness + 2.0 * ranges.brightness * unit(rng);
    r.contrast_factor = ranges.contrast_min + (ranges.contrast_max - ranges.contrast_min) * unit(rng);
    if (kind == AugmentationKind::strong) {
        const double area = ranges.crop_area_min + (ranges.crop_area_max - ranges.crop_area_min) * unit(rng);
        const double cw = width * std::sqrt(area);
        const double ch = height * std::sqrt(area);
        const double x0 = (width - cw) * unit(rng);
        const double y0 = (height - ch) * unit(rng);
        r.crop_window = Box{x0, y0, x0 + cw, y0 + ch};
        if (unit(rng) < ranges.flip_probability) {
            r.flip = unit(rng) < 0.5 ? Flip::horizontal : Flip::vertical;
        }
    }
    return r;
}

GeometricMap::GeometricMap(int width, int height, std::optional<Box> window, std::optional<Flip> flip)
    : width_(width), height_(height), window_(window.value_or(full_frame(width, height))), flip_(flip) {}

bool GeometricMap::is_identity() const {
    return !flip_ && window_ == full_frame(width_, height_);
}

Point GeometricMap::to_augmented(const Point& p) const {
    Point q{(p.x - window_.x_min) * width_ / window_.width(), (p.y - window_.y_min) * height_ / window_.height()};
    if (flip_ == Flip::horizontal) q.x = width_ - q.x;
    if (flip_ == Flip::vertical) q.y = height_ - q.y;
    return q;
}

Point GeometricMap::to_original(const Point& p) const {
    Point q = p;
    if (flip_ == Flip::horizontal) q.x = width_ - q.x;
    if (flip_ == Flip::vertical) q.y = height_ - q.y;
    return {window_.x_min + q.x * window_.width() / width_, window_.y_min + q.y * window_.height() / height_};
}

Box GeometricMap::to_augmented(const Box& b) const {
    return normalized(to_augmented(Point{b.x_min, b.y_min}), to_augmented(Point{b.x_max, b.y_max}));
}

Box GeometricMap::to_original(const Box& b) const {
    return normalized(to_original(Point{b.x_min, b.y_min}), to_original(Point{b.x_max, b.y_max}));
}

std::pair<ImageSample, GeometricMap> apply_augmentation(const ImageSample& sample, const AugmentationRecipe& recipe) {
    const int w = sample.image.width;
    const int h = sample.image.height;
    validate(recipe, w, h);
    GeometricMap map(w, h, recipe.crop_window, recipe.flip);

    ImageSample out;
    out.id = sample.id;
    out.labeled = sample.labeled;
    out.image = recipe.crop_window ? resample(sample.image, *recipe.crop_window, w, h) : sample.image;
    if (recipe.flip) {
        flip_pixels(out.image, *recipe.flip);
    }
    adjust_photometric(out.image, recipe.brightness_delta, recipe.contrast_factor);

    const Box frame = full_frame(w, h);
    for (const auto& inst : sample.instances) {
        if (map.is_identity()) {
            out.instances.push_back(inst);
            continue;
        }
        const Box mapped = clamp_box(map.to_augmented(inst.bbox), w, h);
        if (!(mapped.width() >= 1.0 && mapped.height() >= 1.0)) {
            continue;
        }
        LabeledInstance t{inst.class_id, mapped, std::nullopt};
        if (inst.stem) {
            const Point s = map.to_augmented(*inst.stem);
            if (!frame.contains(s)) {
                continue;
            }
            t.stem = clamp_point(s, mapped);
        }
        out.instances.push_back(t);
    }
    return {std::move(out), map};
}

ImageSample resize_sample(const ImageSample& sample, int size) {
    if (sample.image.width == size && sample.image.height == size) {
        return sample;
    }
    const double kx = static_cast<double>(size) / sample.image.width;
    const double ky = static_cast<double>(size) / sample.image.height;
    ImageSample out;
    out.id = sample.id;
    out.labeled = sample.labeled;
    out.image = resample(sample.image, full_frame(sample.image.width, sample.image.height), size, size);
    for (const auto& inst : sample.instances) {
        LabeledInstance t = inst;
        t.bbox = {inst.bbox.x_min * kx, inst.bbox.y_min * ky, inst.bbox.x_max * kx, inst.bbox.y_max * ky};
        if (inst.stem) {
            t.stem = Point{inst.stem->x * kx, inst.stem->y * ky};
        }
        out.instances.push_back(t);
    }
    return out;
}

}  // namespace wsd::data
