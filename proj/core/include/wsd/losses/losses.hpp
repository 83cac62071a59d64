#pragma once

#include <span>

#include "wsd/detector/raw_output.hpp"
#include "wsd/detector/targets.hpp"

namespace wsd::losses {

using detector::GridTarget;
using detector::RawGridOutput;

/// Weights of the classification, box and stem terms in the total loss.
struct LossWeights {
    double alpha = 0.2;
    double beta = 0.3;
    double gamma = 0.5;

    void validate() const;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossOptions {
    /// Down-weighting of objectness cross-entropy on negative anchors.
    double negative_weight = 0.5;
};

struct LossBreakdown {
    double l_cls = 0.0;
    double l_bbox = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    int positives = 0;
    int weed_positives = 0;
};

struct ClassificationTerms {
    double objectness = 0.0;  ///< BCE over all anchors, normalized by the positive count
    double classes = 0.0;     ///< mean categorical cross-entropy over positives
};

// All losses take a batch: raws[i] is scored against targets[i]. Means run
// over the whole batch (positives / weed positives summed across images).

ClassificationTerms classification_terms(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                                         const LossOptions& options = {});
double classification_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                           const LossOptions& options = {});

/// Squared error on (sigmoid(tx), sigmoid(ty), tw, th) over positives, averaged
/// over the four offsets; 0 with no positives.
double bbox_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets);

/// Mean squared Euclidean distance between predicted and target stem offsets
/// (cell units) over weed anchors only; 0 with no weed anchors.
double stem_regression_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets);

LossBreakdown combined_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                            const LossWeights& weights, const LossOptions& options = {});

/// As combined_loss, also writing d(total)/d(grid) into grads[i].grid.
/// Terms with zero weight contribute no gradient.
LossBreakdown combined_loss_and_gradient(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                                         const LossWeights& weights, const LossOptions& options,
                                         std::span<RawGridOutput> grads);

inline LossBreakdown combined_loss(const RawGridOutput& raw, const GridTarget& target, const LossWeights& weights,
                                   const LossOptions& options = {}) {
    return combined_loss(std::span(&raw, 1), std::span(&target, 1), weights, options);
}
inline double stem_regression_loss(const RawGridOutput& raw, const GridTarget& target) {
    return stem_regression_loss(std::span(&raw, 1), std::span(&target, 1));
}
inline double bbox_loss(const RawGridOutput& raw, const GridTarget& target) {
    return bbox_loss(std::span(&raw, 1), std::span(&target, 1));
}
inline double classification_loss(const RawGridOutput& raw, const GridTarget& target,
                                   const LossOptions& options = {}) {
    return classification_loss(std::span(&raw, 1), std::span(&target, 1), options);
}

}  // namespace wsd::losses
