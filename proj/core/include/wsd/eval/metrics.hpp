#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsd/data/sample.hpp"
#include "wsd/detector/decode.hpp"
#include "wsd/detector/raw_output.hpp"

namespace wsd::eval {

using detector::Prediction;
using data::LabeledInstance;

inline constexpr double kDefaultIouFloor = 0.3;

struct MatchPair {
    int prediction = 0;
    int truth = 0;
    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchingResult {
    std::vector<MatchPair> pairs;  ///< ascending by prediction index
    std::vector<int> unmatched_predictions;
    std::vector<int> unmatched_truths;
    double iou_floor = kDefaultIouFloor;
};

/// Quality of a matching, compared lexicographically: more pairs, then more
/// class-agreeing pairs, then smaller summed stem distance over weed pairs.
struct MatchScore {
    int pairs = 0;
    int agreeing = 0;
    double stem_distance = 0.0;
};

bool feasible(const Prediction& p, const LabeledInstance& t, double iou_floor);
bool is_weed_pair(const Prediction& p, const LabeledInstance& t);
MatchScore score(std::span<const MatchPair> pairs, std::span<const Prediction> predictions,
                 std::span<const LabeledInstance> truths);
/// -1, 0 or 1; stem distances within a relative 1e-9 compare equal.
int compare(const MatchScore& a, const MatchScore& b);

/// Optimal one-to-one matching under class-agnostic IoU >= iou_floor. Among
/// equally scored matchings the one whose per-prediction truth indices are
/// lexicographically smallest wins (unmatched ranks after every truth).
MatchingResult match(std::span<const Prediction> predictions, std::span<const LabeledInstance> truths,
                     double iou_floor = kDefaultIouFloor);

/// Stem distances of every matched weed pair.
std::vector<double> stem_errors(const MatchingResult& m, std::span<const Prediction> predictions,
                                std::span<const LabeledInstance> truths);

/// Mean stem distance in pixels over matched weed pairs; empty without any.
std::optional<double> dist_metric(const MatchingResult& m, std::span<const Prediction> predictions,
                                  std::span<const LabeledInstance> truths);

struct CropConfusion {
    int crops = 0;
    int crops_as_weed = 0;
};

CropConfusion crop_confusion(const MatchingResult& m, std::span<const Prediction> predictions,
                             std::span<const LabeledInstance> truths);

/// Fraction of crop truths whose matched prediction is a weed; 0 without crops.
double fp_rate(const MatchingResult& m, std::span<const Prediction> predictions,
               std::span<const LabeledInstance> truths);

struct LaserModel {
    double kill_radius = 1.0;
    /// Shots spent on one target before moving on; a hit stops early.
    int max_shots_per_target = 1;

    void validate() const;
};

struct Shot {
    std::string image_id;
    Point point;
    bool hit = false;
    int target = -1;      ///< truth index of the killed weed
    int prediction = -1;
    bool crop_risk = false;  ///< lands inside a crop box
};

struct WeedingResult {
    int weeds = 0;
    int shots = 0;
    int kills = 0;
    std::vector<Shot> log;

    double accuracy() const { return weeds > 0 ? static_cast<double>(kills) / weeds : 0.0; }
    std::optional<double> energy_cost() const {
        return weeds > 0 ? std::optional<double>(static_cast<double>(shots) / weeds) : std::nullopt;
    }
};

/// Fires at the stem of every weed prediction in descending confidence. A
/// shot kills the closest still-living true weed within kill_radius of the
/// aim point. A shot that kills nothing is repeated up to
/// max_shots_per_target times in total.
WeedingResult simulate_weeding(std::span<const Prediction> predictions, std::span<const LabeledInstance> truths,
                               const LaserModel& laser, const std::string& image_id = {});

/// Replaces every weed stem with the center of its box.
std::vector<Prediction> bbox_center_baseline(std::vector<Prediction> predictions);

/// 0.1 x mean diagonal of the ground-truth weed boxes.
double default_kill_radius(std::span<const data::ImageSample> samples);

struct MetricsReport {
    std::optional<double> mean_dist;             ///< pixels
    std::optional<double> mean_dist_normalized;  ///< pixels / cell size
    double fp_rate = 0.0;
    double weeding_accuracy = 0.0;
    std::optional<double> energy_cost;  ///< empty when no true weeds
    int images = 0;
    int predictions = 0;
    int weeds = 0;
    int crops = 0;
    int crops_as_weed = 0;
    int weed_pairs = 0;
    int shots = 0;
    int kills = 0;
    double kill_radius = 0.0;
    int max_shots_per_target = 1;
    double iou_floor = kDefaultIouFloor;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Pools counts over images; Dist is the mean over all weed pairs.
class MetricsAccumulator {
public:
    MetricsAccumulator(LaserModel laser, double cell_size, double iou_floor = kDefaultIouFloor);

    void add(const std::string& image_id, std::span<const Prediction> predictions,
             std::span<const LabeledInstance> truths);
    MetricsReport report() const;
    const std::vector<Shot>& shots() const { return shots_; }

private:
    LaserModel laser_;
    double cell_size_;
    double iou_floor_;
    double dist_sum_ = 0.0;
    MetricsReport counts_;
    std::vector<Shot> shots_;
};

/// Evaluates a whole set of predictions against labeled samples.
MetricsReport evaluate(std::span<const std::vector<Prediction>> predictions,
                       std::span<const data::ImageSample> samples, const LaserModel& laser, double cell_size,
                       double iou_floor = kDefaultIouFloor, std::vector<Shot>* shot_log = nullptr);

struct SweepRow {
    double threshold = 0.0;
    double fp_rate = 0.0;
    std::optional<double> dist;
    int predictions = 0;
    int crops = 0;
    int crops_as_weed = 0;
    int weed_pairs = 0;
};

/// Decodes the stored raw outputs at every threshold (ascending) and scores
/// each against the samples.
std::vector<SweepRow> threshold_sweep(std::span<const detector::RawGridOutput> raws,
                                      std::span<const data::ImageSample> samples,
                                      std::span<const double> thresholds, const detector::DetectorConfig& config,
                                      double iou_floor = kDefaultIouFloor, double nms_iou = detector::kDefaultNmsIou);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);
/// Lines: "<image id> <x> <y> hit|miss <target>", target -1 on a miss.
void write_shot_log(const std::filesystem::path& path, std::span<const Shot> shots);

}  // namespace wsd::eval
