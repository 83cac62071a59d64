#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wsd/data/sample.hpp"
#include "wsd/detector/config.hpp"
#include "wsd/detector/raw_output.hpp"

namespace wsd::detector {

inline constexpr double kDefaultNmsIou = 0.45;

struct Prediction {
    data::ClassId class_id = data::ClassId::weed;
    double confidence = 0.0;  ///< sigmoid(objectness) * class probability
    Box bbox;
    std::optional<Point> stem;  ///< weeds only
    std::vector<double> embedding;
    std::vector<double> class_logits;
    int row = 0;
    int col = 0;
    int anchor = 0;
};

double sigmoid(double x);

/// Thresholds on objectness times class probability, then runs greedy
/// per-class NMS. Output is sorted by descending confidence.
std::vector<Prediction> decode(const RawGridOutput& raw, const DetectorConfig& config, double conf_threshold,
                               double nms_iou = kDefaultNmsIou);

/// Mean feature vector over the cells a box overlaps; boxes smaller than a
/// cell in both dimensions use the cell holding their center.
std::vector<double> pool_embedding(const RawGridOutput& raw, const Box& box, const DetectorConfig& config);

/// One pooled embedding per ground-truth weed of a labeled sample.
std::vector<std::pair<data::LabeledInstance, std::vector<double>>> extract_gt_embeddings(
    const data::ImageSample& sample, const RawGridOutput& raw, const DetectorConfig& config);

std::vector<Prediction> non_maximum_suppression(std::vector<Prediction> predictions, double iou_threshold);

}  // namespace wsd::detector
