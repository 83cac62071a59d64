#include "wsd/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "wsd/errors.hpp"

namespace wsd::data {

namespace {

constexpr int kPlacementAttempts = 200;
constexpr double kMaxPairIou = 0.1;

struct Rgb {
    double r, g, b;
};

class Canvas {
public:
    explicit Canvas(Image& image) : image_(image) {}

    // Rotated ellipse, clipped to `clip`. Shade varies per pixel by a fixed hash.
    void fill_ellipse(const Point& c, double semi_major, double semi_minor, double angle, const Rgb& color,
                      const Box& clip) {
        const double reach = std::max(semi_major, semi_minor) + 1.0;
        const int x0 = std::max(static_cast<int>(std::floor(std::max(c.x - reach, clip.x_min))), 0);
        const int x1 = std::min(static_cast<int>(std::ceil(std::min(c.x + reach, clip.x_max))), image_.width);
        const int y0 = std::max(static_cast<int>(std::floor(std::max(c.y - reach, clip.y_min))), 0);
        const int y1 = std::min(static_cast<int>(std::ceil(std::min(c.y + reach, clip.y_max))), image_.height);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const double px = x + 0.5 - c.x;
                const double py = y + 0.5 - c.y;
                const double u = (px * ca + py * sa) / semi_major;
                const double v = (-px * sa + py * ca) / semi_minor;
                if (u * u + v * v <= 1.0) {
                    // Darker toward the leaf rim.
                    const double shade = 1.0 - 0.25 * (u * u + v * v) + 0.06 * texture(x, y);
                    put(x, y, color, shade);
                }
            }
        }
    }

    void fill_disk(const Point& c, double radius, const Rgb& color, const Box& clip) {
        fill_ellipse(c, radius, radius, 0.0, color, clip);
    }

    void put(int x, int y, const Rgb& color, double shade) {
        image_.at(x, y, 0) = to_byte(color.r * shade);
        image_.at(x, y, 1) = to_byte(color.g * shade);
        image_.at(x, y, 2) = to_byte(color.b * shade);
    }

private:
    static std::uint8_t to_byte(double v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }

    // Deterministic value in [-1, 1] from pixel coordinates.
    static double texture(int x, int y) {
        std::uint32_t h = static_cast<std::uint32_t>(x) * 73856093u ^ static_cast<std::uint32_t>(y) * 19349663u;
        h ^= h >> 13;
        h *= 0x5bd1e995u;
        h ^= h >> 15;
        return (h % 2001u) / 1000.0 - 1.0;
    }

    Image& image_;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Rgb jitter(const Rgb& base, std::mt19937_64& rng, double amount) {
    const double k = uniform(rng, 1.0 - amount, 1.0 + amount);
    return {base.r * k, base.g * k, base.b * k};
}

void paint_soil(Image& img, double clutter, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> noise(-12, 12);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int n = noise(rng);
            img.at(x, y, 0) = static_cast<std::uint8_t>(125 + n);
            img.at(x, y, 1) = static_cast<std::uint8_t>(95 + n);
            img.at(x, y, 2) = static_cast<std::uint8_t>(65 + n);
        }
    }
    Canvas canvas(img);
    const Box frame{0, 0, static_cast<double>(img.width), static_cast<double>(img.height)};
    const int pebbles = static_cast<int>(clutter * img.width * img.height / 150.0);
    for (int i = 0; i < pebbles; ++i) {
        const Point c{uniform(rng, 0, img.width), uniform(rng, 0, img.height)};
        const double r = uniform(rng, 0.8, 2.5);
        const double tone = uniform(rng, 90, 165);
        canvas.fill_disk(c, r, {tone, tone * 0.85, tone * 0.7}, frame);
    }
}

// Leaves radiate from the stem to the box corners and some edge midpoints, so
// the stem is where the leaves converge rather than where the box is centered.
void paint_weed(Canvas& canvas, const Box& box, const Point& stem, std::mt19937_64& rng) {
    const Rgb color = jitter({150, 165, 45}, rng, 0.08);
    std::vector<Point> tips = {{box.x_min + 0.5, box.y_min + 0.5},
                               {box.x_max - 0.5, box.y_min + 0.5},
                               {box.x_min + 0.5, box.y_max - 0.5},
                               {box.x_max - 0.5, box.y_max - 0.5}};
    const std::array<Point, 4> mids = {Point{box.center().x, box.y_min + 0.5}, Point{box.center().x, box.y_max - 0.5},
                                       Point{box.x_min + 0.5, box.center().y}, Point{box.x_max - 0.5, box.center().y}};
    for (const auto& m : mids) {
        if (uniform(rng, 0, 1) < 0.5) {
            tips.push_back(m);
        }
    }
    for (const auto& tip : tips) {
        const double len = distance(stem, tip);
        if (len < 1.0) {
            continue;
        }
        const Point mid{0.5 * (stem.x + tip.x), 0.5 * (stem.y + tip.y)};
        const double angle = std::atan2(tip.y - stem.y, tip.x - stem.x);
        const double width = std::max(1.2, 0.22 * 0.5 * len * uniform(rng, 0.8, 1.2));
        canvas.fill_ellipse(mid, 0.5 * len, width, angle, color, box);
    }
}

void paint_crop(Canvas& canvas, ClassId cls, const Box& box, std::mt19937_64& rng) {
    const Point c = box.center();
    const double s = 0.5 * (box.width() + box.height());
    switch (cls) {
        case ClassId::maize: {
            const Rgb color = jitter({70, 170, 60}, rng, 0.08);
            const std::array<Point, 4> corners = {Point{box.x_min + 0.5, box.y_min + 0.5},
                                                  Point{box.x_max - 0.5, box.y_min + 0.5},
                                                  Point{box.x_min + 0.5, box.y_max - 0.5},
                                                  Point{box.x_max - 0.5, box.y_max - 0.5}};
            for (const auto& tip : corners) {
                const double len = distance(c, tip);
                const Point mid{0.5 * (c.x + tip.x), 0.5 * (c.y + tip.y)};
                canvas.fill_ellipse(mid, 0.5 * len, std::max(1.0, 0.12 * 0.5 * len),
                                    std::atan2(tip.y - c.y, tip.x - c.x), color, box);
            }
            break;
        }
        case ClassId::soybean: {
            const Rgb color = jitter({35, 120, 35}, rng, 0.08);
            const double phase = uniform(rng, 0, 2 * std::numbers::pi);
            for (int k = 0; k < 3; ++k) {
                const double a = phase + k * 2 * std::numbers::pi / 3;
                canvas.fill_disk({c.x + 0.22 * s * std::cos(a), c.y + 0.22 * s * std::sin(a)}, 0.28 * s, color, box);
            }
            break;
        }
        case ClassId::mungbean: {
            const Rgb color = jitter({100, 190, 80}, rng, 0.08);
            canvas.fill_ellipse({c.x - 0.22 * box.width(), c.y}, 0.28 * box.width(), 0.4 * box.height(), 0.0, color,
                                box);
            canvas.fill_ellipse({c.x + 0.22 * box.width(), c.y}, 0.28 * box.width(), 0.4 * box.height(), 0.0, color,
                                box);
            break;
        }
        case ClassId::weed:
            break;
    }
}

bool collides(const Box& candidate, const std::vector<LabeledInstance>& placed) {
    return std::any_of(placed.begin(), placed.end(), [&](const LabeledInstance& other) {
        return other.bbox.contains(candidate.center()) || candidate.contains(other.bbox.center()) ||
               iou(other.bbox, candidate) > kMaxPairIou;
    });
}

Point place_stem(const Box& box, const StemOffsetDistribution& dist, std::mt19937_64& rng) {
    const double size = 0.5 * (box.width() + box.height());
    const double frac = std::max(0.0, std::normal_distribution<double>(dist.mean, dist.spread)(rng));
    const double half_w = 0.5 * box.width() - 1.0;
    const double half_h = 0.5 * box.height() - 1.0;
    const Point c = box.center();
    double dx = 0.0;
    double dy = 0.0;
    for (int attempt = 0; attempt < 16; ++attempt) {
        const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        dx = frac * size * std::cos(theta);
        dy = frac * size * std::sin(theta);
        if (std::abs(dx) <= half_w && std::abs(dy) <= half_h) {
            break;
        }
    }
    dx = std::clamp(dx, -half_w, half_w);
    dy = std::clamp(dy, -half_h, half_h);
    return {std::round(c.x + dx), std::round(c.y + dy)};
}

}  // namespace

void validate(const SyntheticSceneSpec& spec) {
    if (spec.image_size < 64) {
        throw ValidationError("synthetic scene: image_size must be >= 64");
    }
    if (spec.crop_count < 0 || spec.weed_count < 0) {
        throw ValidationError("synthetic scene: plant counts must be >= 0");
    }
    if (spec.clutter_level < 0.0 || spec.clutter_level > 1.0) {
        throw ValidationError("synthetic scene: clutter_level must lie in [0, 1]");
    }
    if (!(spec.min_plant_fraction > 0.0 && spec.min_plant_fraction <= spec.max_plant_fraction &&
          spec.max_plant_fraction <= 1.0)) {
        throw ValidationError("synthetic scene: invalid plant size range");
    }
    if (spec.stem_offset.mean < 0.0 || spec.stem_offset.spread < 0.0) {
        throw ValidationError("synthetic scene: stem offset parameters must be non-negative");
    }
    if (spec.crop_class == ClassId::weed) {
        throw ValidationError("synthetic scene: crop_class cannot be weed");
    }
}

ImageSample generate_scene(const SyntheticSceneSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    ImageSample sample;
    sample.id = "scene_" + std::to_string(spec.seed);
    sample.labeled = true;
    sample.image = Image(spec.image_size, spec.image_size);
    paint_soil(sample.image, spec.clutter_level, rng);

    std::vector<ClassId> classes(static_cast<std::size_t>(spec.weed_count), ClassId::weed);
    for (int i = 0; i < spec.crop_count; ++i) {
        classes.push_back(spec.crop_class ? *spec.crop_class
                                          : static_cast<ClassId>(std::uniform_int_distribution<int>(1, 3)(rng)));
    }
    std::shuffle(classes.begin(), classes.end(), rng);

    const double n = spec.image_size;
    for (const ClassId cls : classes) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const double side = uniform(rng, spec.min_plant_fraction, spec.max_plant_fraction) * n;
            const double aspect = uniform(rng, 0.8, 1.25);
            const int w = std::clamp(static_cast<int>(std::lround(side * std::sqrt(aspect))), 6, spec.image_size);
            const int h = std::clamp(static_cast<int>(std::lround(side / std::sqrt(aspect))), 6, spec.image_size);
            const int x0 = std::uniform_int_distribution<int>(0, spec.image_size - w)(rng);
            const int y0 = std::uniform_int_distribution<int>(0, spec.image_size - h)(rng);
            const Box box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + w),
                          static_cast<double>(y0 + h)};
            if (collides(box, sample.instances)) {
                continue;
            }
            LabeledInstance inst{cls, box, std::nullopt};
            if (cls == ClassId::weed) {
                inst.stem = place_stem(box, spec.stem_offset, rng);
            }
            sample.instances.push_back(inst);
            placed = true;
        }
        if (!placed) {
            throw CapacityError("synthetic scene " + std::to_string(spec.seed) + ": cannot place " +
                                std::to_string(classes.size()) + " plants without center collisions");
        }
    }

    // Larger plants first so small ones stay visible; stem bases last.
    std::vector<std::size_t> order(sample.instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sample.instances[a].bbox.area() > sample.instances[b].bbox.area();
    });
    Canvas canvas(sample.image);
    for (const std::size_t i : order) {
        const auto& inst = sample.instances[i];
        if (inst.is_weed()) {
            paint_weed(canvas, inst.bbox, *inst.stem, rng);
        } else {
            paint_crop(canvas, inst.class_id, inst.bbox, rng);
        }
    }
    const Rgb stem_color{70, 45, 25};
    for (const std::size_t i : order) {
        const auto& inst = sample.instances[i];
        const double s = 0.5 * (inst.bbox.width() + inst.bbox.height());
        const Point base = inst.stem ? Point{inst.stem->x, inst.stem->y} : inst.bbox.center();
        canvas.fill_disk(base, std::max(1.0, 0.05 * s), stem_color, inst.bbox);
    }
    return sample;
}

}  // namespace wsd::data
