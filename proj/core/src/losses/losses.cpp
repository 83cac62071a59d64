#include "wsd/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wsd/detector/decode.hpp"
#include "wsd/errors.hpp"

namespace wsd::losses {

using detector::AnchorTarget;
using detector::ChannelLayout;
using detector::sigmoid;

namespace {

// Numerically stable BCE with logits.
double bce_with_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

void check_batch(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets) {
    if (raws.size() != targets.size()) {
        throw ConfigError("loss: batch has " + std::to_string(raws.size()) + " outputs but " +
                          std::to_string(targets.size()) + " targets");
    }
    for (std::size_t i = 0; i < raws.size(); ++i) {
        const auto& r = raws[i];
        const auto& t = targets[i];
        if (r.grid_size != t.grid_size || r.num_anchors != t.num_anchors ||
            t.slots.size() != static_cast<std::size_t>(r.grid_size) * r.grid_size * r.num_anchors) {
            throw ConfigError("loss: output and target shapes differ");
        }
    }
}

struct Counts {
    int positives = 0;
    int weeds = 0;
};

Counts count(std::span<const GridTarget> targets) {
    Counts c;
    for (const auto& t : targets) {
        c.positives += t.positive_count();
        c.weeds += t.weed_count();
    }
    return c;
}

int num_classes(const RawGridOutput& r) {
    return r.channels - ChannelLayout::class_begin - 2;
}

// Visits every (raw anchor vector, target slot) pair of the batch.
template <typename F>
void for_each_slot(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets, F&& f) {
    for (std::size_t i = 0; i < raws.size(); ++i) {
        const auto& raw = raws[i];
        const auto& target = targets[i];
        for (std::size_t s = 0; s < target.slots.size(); ++s) {
            f(i, s * static_cast<std::size_t>(raw.channels), target.slots[s]);
        }
    }
}

// Shared implementation of value and (optional) gradient for every term.
// grads == nullptr computes values only.
LossBreakdown evaluate(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                       const LossWeights& weights, const LossOptions& options, std::span<RawGridOutput>* grads,
                       ClassificationTerms* terms_out) {
    check_batch(raws, targets);
    const Counts n = count(targets);
    const double pos_norm = 1.0 / std::max(1, n.positives);
    const double box_norm = n.positives > 0 ? 1.0 / (4.0 * n.positives) : 0.0;
    const double stem_norm = n.weeds > 0 ? 1.0 / n.weeds : 0.0;
    const bool want_cls = grads && weights.alpha != 0.0;
    const bool want_box = grads && weights.beta != 0.0;
    const bool want_reg = grads && weights.gamma != 0.0;

    ClassificationTerms terms;
    double box = 0.0;
    double reg = 0.0;
    std::vector<double> probs;

    for_each_slot(raws, targets, [&](std::size_t img, std::size_t base, const AnchorTarget& t) {
        const double* v = raws[img].grid.data() + base;
        double* g = grads ? (*grads)[img].grid.data() + base : nullptr;
        const int k = num_classes(raws[img]);
        const int sx = ChannelLayout::class_begin + k;

        const double z = v[ChannelLayout::objectness];
        const double y = t.positive ? 1.0 : 0.0;
        const double w_obj = t.positive ? 1.0 : options.negative_weight;
        terms.objectness += w_obj * bce_with_logit(z, y) * pos_norm;
        if (want_cls) {
            g[ChannelLayout::objectness] += weights.alpha * w_obj * (sigmoid(z) - y) * pos_norm;
        }
        if (t.positive) {
            const double* logits = v + ChannelLayout::class_begin;
            const double peak = *std::max_element(logits, logits + k);
            probs.assign(static_cast<std::size_t>(k), 0.0);
            double total = 0.0;
            for (int c = 0; c < k; ++c) {
                probs[c] = std::exp(logits[c] - peak);
                total += probs[c];
            }
            terms.classes += (std::log(total) + peak - logits[t.class_index]) * pos_norm;
            if (want_cls) {
                for (int c = 0; c < k; ++c) {
                    const double p = probs[c] / total;
                    g[ChannelLayout::class_begin + c] +=
                        weights.alpha * (p - (c == t.class_index ? 1.0 : 0.0)) * pos_norm;
                }
            }

            const double px = sigmoid(v[ChannelLayout::tx]);
            const double py = sigmoid(v[ChannelLayout::ty]);
            const double dx = px - t.tx;
            const double dy = py - t.ty;
            const double dw = v[ChannelLayout::tw] - t.tw;
            const double dh = v[ChannelLayout::th] - t.th;
            box += (dx * dx + dy * dy + dw * dw + dh * dh) * box_norm;
            if (want_box) {
                const double s = weights.beta * 2.0 * box_norm;
                g[ChannelLayout::tx] += s * dx * px * (1.0 - px);
                g[ChannelLayout::ty] += s * dy * py * (1.0 - py);
                g[ChannelLayout::tw] += s * dw;
                g[ChannelLayout::th] += s * dh;
            }
        }
        if (t.weed) {
            const double ex = v[sx] - t.sx;
            const double ey = v[sx + 1] - t.sy;
            reg += (ex * ex + ey * ey) * stem_norm;
            if (want_reg) {
                g[sx] += weights.gamma * 2.0 * ex * stem_norm;
                g[sx + 1] += weights.gamma * 2.0 * ey * stem_norm;
            }
        }
    });

    if (terms_out) {
        *terms_out = terms;
    }
    LossBreakdown b;
    b.l_cls = terms.objectness + terms.classes;
    b.l_bbox = box;
    b.l_reg = reg;
    b.total = weights.alpha * b.l_cls + weights.beta * b.l_bbox + weights.gamma * b.l_reg;
    b.positives = n.positives;
    b.weed_positives = n.weeds;
    return b;
}

}  // namespace

void LossWeights::validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
        throw ConfigError("at least one loss weight must be positive");
    }
}

ClassificationTerms classification_terms(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                                         const LossOptions& options) {
    ClassificationTerms terms;
    evaluate(raws, targets, LossWeights{1.0, 0.0, 0.0}, options, nullptr, &terms);
    return terms;
}

double classification_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                           const LossOptions& options) {
    const auto t = classification_terms(raws, targets, options);
    return t.objectness + t.classes;
}

double bbox_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets) {
    return evaluate(raws, targets, LossWeights{0.0, 1.0, 0.0}, {}, nullptr, nullptr).l_bbox;
}

double stem_regression_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets) {
    return evaluate(raws, targets, LossWeights{0.0, 0.0, 1.0}, {}, nullptr, nullptr).l_reg;
}

LossBreakdown combined_loss(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                            const LossWeights& weights, const LossOptions& options) {
    weights.validate();
    return evaluate(raws, targets, weights, options, nullptr, nullptr);
}

LossBreakdown combined_loss_and_gradient(std::span<const RawGridOutput> raws, std::span<const GridTarget> targets,
                                         const LossWeights& weights, const LossOptions& options,
                                         std::span<RawGridOutput> grads) {
    weights.validate();
    if (grads.size() != raws.size()) {
        throw ConfigError("loss: gradient buffer count differs from batch size");
    }
    for (std::size_t i = 0; i < raws.size(); ++i) {
        grads[i].grid_size = raws[i].grid_size;
        grads[i].num_anchors = raws[i].num_anchors;
        grads[i].channels = raws[i].channels;
        grads[i].embedding_dim = raws[i].embedding_dim;
        grads[i].grid.assign(raws[i].grid.size(), 0.0);
        grads[i].features.clear();
    }
    return evaluate(raws, targets, weights, options, &grads, nullptr);
}

}  // namespace wsd::losses
