#pragma once

#include <span>
#include <string>
#include <vector>

#include "wsd/data/sample.hpp"
#include "wsd/detector/config.hpp"
#include "wsd/detector/raw_output.hpp"

namespace wsd::detector {

/// Regression and classification targets of one (cell, anchor) slot.
/// Box offsets: tx, ty in [0, 1) inside the cell, tw, th log ratios to the
/// anchor. Stem offsets: measured from the cell's top-left corner in cell units.
struct AnchorTarget {
    bool positive = false;
    int class_index = -1;
    double tx = 0.0;
    double ty = 0.0;
    double tw = 0.0;
    double th = 0.0;
    bool weed = false;
    double sx = 0.0;
    double sy = 0.0;
    int instance = -1;  ///< index into the instance list, -1 if unassigned
};

struct GridTarget {
    int grid_size = 0;
    int num_anchors = 0;
    std::vector<AnchorTarget> slots;
    std::vector<std::string> warnings;

    static GridTarget empty(const DetectorConfig& config);

    AnchorTarget& at(int row, int col, int anchor) {
        return slots[(static_cast<std::size_t>(row) * grid_size + col) * num_anchors + anchor];
    }
    const AnchorTarget& at(int row, int col, int anchor) const {
        return slots[(static_cast<std::size_t>(row) * grid_size + col) * num_anchors + anchor];
    }

    int positive_count() const;
    int weed_count() const;
};

struct CellIndex {
    int row = 0;
    int col = 0;

    friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

CellIndex cell_of(const Point& p, const DetectorConfig& config);

/// Index of the anchor with maximal shape IoU (boxes aligned at a common
/// center); ties go to the lower index.
int best_anchor(double width, double height, std::span<const Anchor> anchors);

/// Each instance goes to the cell holding its box center and to its best
/// anchor. On a slot collision the larger-area instance wins and a warning is
/// recorded.
GridTarget assign_targets(std::span<const data::LabeledInstance> instances, const DetectorConfig& config);

/// Detection-free variant: only the stem channels of anchor 0 are supervised,
/// at the cell containing each weed's stem.
GridTarget assign_stem_targets(std::span<const data::LabeledInstance> instances, const DetectorConfig& config);

/// Writes targets into a raw tensor as saturated logits, so decode() inverts
/// assign_targets().
RawGridOutput targets_to_raw(const GridTarget& target, const DetectorConfig& config);

}  // namespace wsd::detector
