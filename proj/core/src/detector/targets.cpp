#include "wsd/detector/targets.hpp"

#include <algorithm>
#include <cmath>

#include "wsd/detector/decode.hpp"

namespace wsd::detector {

namespace {

constexpr double kSaturated = 20.0;

double logit(double p) {
    p = std::clamp(p, 1e-9, 1.0 - 1e-9);
    return std::log(p / (1.0 - p));
}

// Places `candidate` into `slot`, keeping the larger-area instance on collision.
void claim(GridTarget& target, AnchorTarget& slot, const AnchorTarget& candidate,
           std::span<const data::LabeledInstance> instances, CellIndex cell, int anchor) {
    if (slot.instance >= 0) {
        const double kept_area = instances[static_cast<std::size_t>(slot.instance)].bbox.area();
        const double new_area = instances[static_cast<std::size_t>(candidate.instance)].bbox.area();
        const int loser = new_area > kept_area ? slot.instance : candidate.instance;
        target.warnings.push_back("instances " + std::to_string(slot.instance) + " and " +
                                  std::to_string(candidate.instance) + " collide at cell (" +
                                  std::to_string(cell.row) + ", " + std::to_string(cell.col) + ") anchor " +
                                  std::to_string(anchor) + "; dropped instance " + std::to_string(loser));
        if (new_area <= kept_area) {
            return;
        }
    }
    slot = candidate;
}

}  // namespace

GridTarget GridTarget::empty(const DetectorConfig& config) {
    GridTarget t;
    t.grid_size = config.grid_size;
    t.num_anchors = config.num_anchors();
    t.slots.resize(static_cast<std::size_t>(t.grid_size) * t.grid_size * t.num_anchors);
    return t;
}

int GridTarget::positive_count() const {
    return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const AnchorTarget& s) { return s.positive; }));
}

int GridTarget::weed_count() const {
    return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const AnchorTarget& s) { return s.weed; }));
}

CellIndex cell_of(const Point& p, const DetectorConfig& config) {
    const double cell = config.cell_size();
    const int last = config.grid_size - 1;
    return {std::clamp(static_cast<int>(std::floor(p.y / cell)), 0, last),
            std::clamp(static_cast<int>(std::floor(p.x / cell)), 0, last)};
}

int best_anchor(double width, double height, std::span<const Anchor> anchors) {
    int best = 0;
    double best_iou = -1.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double inter = std::min(width, anchors[i].width) * std::min(height, anchors[i].height);
        const double uni = width * height + anchors[i].width * anchors[i].height - inter;
        const double v = uni > 0.0 ? inter / uni : 0.0;
        if (v > best_iou) {
            best_iou = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

GridTarget assign_targets(std::span<const data::LabeledInstance> instances, const DetectorConfig& config) {
    GridTarget target = GridTarget::empty(config);
    const double cell = config.cell_size();
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const Point c = inst.bbox.center();
        const CellIndex idx = cell_of(c, config);
        const int a = best_anchor(inst.bbox.width(), inst.bbox.height(), config.anchors);
        const Anchor& anchor = config.anchors[static_cast<std::size_t>(a)];

        AnchorTarget t;
        t.positive = true;
        t.instance = static_cast<int>(i);
        t.class_index = static_cast<int>(inst.class_id);
        t.tx = c.x / cell - idx.col;
        t.ty = c.y / cell - idx.row;
        t.tw = std::log(inst.bbox.width() / anchor.width);
        t.th = std::log(inst.bbox.height() / anchor.height);
        if (inst.is_weed() && inst.stem) {
            t.weed = true;
            t.sx = inst.stem->x / cell - idx.col;
            t.sy = inst.stem->y / cell - idx.row;
        }
        claim(target, target.at(idx.row, idx.col, a), t, instances, idx, a);
    }
    return target;
}

GridTarget assign_stem_targets(std::span<const data::LabeledInstance> instances, const DetectorConfig& config) {
    GridTarget target = GridTarget::empty(config);
    const double cell = config.cell_size();
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        if (!inst.is_weed() || !inst.stem) {
            continue;
        }
        const CellIndex idx = cell_of(*inst.stem, config);
        AnchorTarget t;
        t.instance = static_cast<int>(i);
        t.weed = true;
        t.sx = inst.stem->x / cell - idx.col;
        t.sy = inst.stem->y / cell - idx.row;
        claim(target, target.at(idx.row, idx.col, 0), t, instances, idx, 0);
    }
    return target;
}

RawGridOutput targets_to_raw(const GridTarget& target, const DetectorConfig& config) {
    RawGridOutput raw = RawGridOutput::zeros(config);
    const ChannelLayout ch = config.channels();
    for (int r = 0; r < target.grid_size; ++r) {
        for (int c = 0; c < target.grid_size; ++c) {
            for (int a = 0; a < target.num_anchors; ++a) {
                const AnchorTarget& t = target.at(r, c, a);
                raw.at(r, c, a, ChannelLayout::objectness) = t.positive ? kSaturated : -kSaturated;
                if (!t.positive) {
                    continue;
                }
                raw.at(r, c, a, ChannelLayout::tx) = logit(t.tx);
                raw.at(r, c, a, ChannelLayout::ty) = logit(t.ty);
                raw.at(r, c, a, ChannelLayout::tw) = t.tw;
                raw.at(r, c, a, ChannelLayout::th) = t.th;
                raw.at(r, c, a, ChannelLayout::class_begin + t.class_index) = kSaturated;
                if (t.weed) {
                    raw.at(r, c, a, ch.stem_x()) = t.sx;
                    raw.at(r, c, a, ch.stem_y()) = t.sy;
                }
            }
        }
    }
    return raw;
}

}  // namespace wsd::detector
