#include "wsd/detector/decode.hpp"

#include <algorithm>
#include <cmath>

#include "wsd/detector/targets.hpp"
#include "wsd/errors.hpp"

namespace wsd::detector {

namespace {

// exp() of box log-ratios is capped so a wild logit cannot overflow.
constexpr double kMaxLogRatio = 8.0;

}  // namespace

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<Prediction> non_maximum_suppression(std::vector<Prediction> predictions, double iou_threshold) {
    std::stable_sort(predictions.begin(), predictions.end(),
                     [](const Prediction& a, const Prediction& b) { return a.confidence > b.confidence; });
    std::vector<Prediction> kept;
    for (auto& p : predictions) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Prediction& k) {
            return k.class_id == p.class_id && iou(k.bbox, p.bbox) > iou_threshold;
        });
        if (!suppressed) {
            kept.push_back(std::move(p));
        }
    }
    return kept;
}

std::vector<double> pool_embedding(const RawGridOutput& raw, const Box& box, const DetectorConfig& config) {
    const double cell = config.cell_size();
    const int last = config.grid_size - 1;
    int c0 = 0;
    int c1 = 0;
    int r0 = 0;
    int r1 = 0;
    if (box.width() < cell && box.height() < cell) {
        const CellIndex idx = cell_of(box.center(), config);
        c0 = c1 = idx.col;
        r0 = r1 = idx.row;
    } else {
        c0 = std::clamp(static_cast<int>(std::floor(box.x_min / cell)), 0, last);
        r0 = std::clamp(static_cast<int>(std::floor(box.y_min / cell)), 0, last);
        c1 = std::clamp(static_cast<int>(std::ceil(box.x_max / cell)) - 1, c0, last);
        r1 = std::clamp(static_cast<int>(std::ceil(box.y_max / cell)) - 1, r0, last);
    }
    std::vector<double> out(static_cast<std::size_t>(raw.embedding_dim), 0.0);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const auto f = raw.feature(r, c);
            for (std::size_t k = 0; k < out.size(); ++k) {
                out[k] += f[k];
            }
        }
    }
    const double n = static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
    for (auto& v : out) {
        v /= n;
    }
    return out;
}

std::vector<Prediction> decode(const RawGridOutput& raw, const DetectorConfig& config, double conf_threshold,
                               double nms_iou) {
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) throw ConfigError("decode threshold must lie in [0, 1]");
    if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) throw ConfigError("NMS IoU must lie in [0, 1]");
    const ChannelLayout ch = config.channels();
    const double cell = config.cell_size();
    const double size = config.input_size;
    std::vector<Prediction> candidates;
    std::vector<double> probs(static_cast<std::size_t>(config.num_classes));
    for (int r = 0; r < raw.grid_size; ++r) {
        for (int c = 0; c < raw.grid_size; ++c) {
            for (int a = 0; a < raw.num_anchors; ++a) {
                const auto v = raw.anchor_values(r, c, a);
                const auto logits = v.subspan(ChannelLayout::class_begin, static_cast<std::size_t>(config.num_classes));
                const double peak = *std::max_element(logits.begin(), logits.end());
                double total = 0.0;
                for (std::size_t k = 0; k < probs.size(); ++k) {
                    probs[k] = std::exp(logits[k] - peak);
                    total += probs[k];
                }
                const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
                const double confidence = sigmoid(v[ChannelLayout::objectness]) * probs[best] / total;
                if (!(confidence >= conf_threshold) || confidence <= 0.0) {
                    continue;
                }
                const Anchor& anchor = config.anchors[static_cast<std::size_t>(a)];
                const double cx = (c + sigmoid(v[ChannelLayout::tx])) * cell;
                const double cy = (r + sigmoid(v[ChannelLayout::ty])) * cell;
                const double w = anchor.width * std::exp(std::min(v[ChannelLayout::tw], kMaxLogRatio));
                const double h = anchor.height * std::exp(std::min(v[ChannelLayout::th], kMaxLogRatio));
                const Box box = clamp_box({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}, size, size);
                if (!box.valid()) {
                    continue;
                }
                Prediction p;
                p.class_id = static_cast<data::ClassId>(best);
                p.confidence = confidence;
                p.bbox = box;
                p.row = r;
                p.col = c;
                p.anchor = a;
                p.class_logits.assign(logits.begin(), logits.end());
                if (p.class_id == data::ClassId::weed) {
                    p.stem = Point{std::clamp((c + v[static_cast<std::size_t>(ch.stem_x())]) * cell, 0.0, size),
                                   std::clamp((r + v[static_cast<std::size_t>(ch.stem_y())]) * cell, 0.0, size)};
                }
                candidates.push_back(std::move(p));
            }
        }
    }
    auto kept = non_maximum_suppression(std::move(candidates), nms_iou);
    for (auto& p : kept) {
        p.embedding = pool_embedding(raw, p.bbox, config);
    }
    return kept;
}

std::vector<std::pair<data::LabeledInstance, std::vector<double>>> extract_gt_embeddings(
    const data::ImageSample& sample, const RawGridOutput& raw, const DetectorConfig& config) {
    if (!sample.labeled) {
        throw ValidationError(sample.id + ": ground-truth embeddings need a labeled sample");
    }
    std::vector<std::pair<data::LabeledInstance, std::vector<double>>> out;
    for (const auto& inst : sample.instances) {
        if (inst.is_weed()) {
            out.emplace_back(inst, pool_embedding(raw, inst.bbox, config));
        }
    }
    return out;
}

}  // namespace wsd::detector
