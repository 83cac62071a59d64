#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsd/data/sample.hpp"
#include "wsd/detector/decode.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/eval/metrics.hpp"
#include "wsd/experiment/config.hpp"
#include "wsd/losses/losses.hpp"

namespace wsd::experiment {

struct Splits {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Seeded shuffle cut by the fractions; the three sets are disjoint and cover
/// 0..n-1.
Splits split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed);

/// Loads or generates the configured samples, resized to the detector input.
std::vector<data::ImageSample> load_dataset(const ExperimentConfig& config);

/// Inference for a trained model. Detection modes decode at `threshold`. In
/// regression-only mode nothing says where weeds are, so the stem head is read
/// at the cell holding each ground-truth weed's box center and each prediction
/// carries the truth's box.
std::vector<std::vector<detector::Prediction>> predict(const detector::Network& network,
                                                       std::span<const double> params,
                                                       std::span<const data::ImageSample> samples, Mode mode,
                                                       double threshold);

struct EpochSummary {
    int epoch = 0;
    std::string phase;  ///< "train", "teacher" or "student"
    losses::LossBreakdown mean_loss;
    std::optional<double> val_dist;
};

struct SslRound {
    int round = 0;
    std::size_t bank_size = 0;
    std::size_t pseudo_labels = 0;
    std::optional<double> val_dist;
};

struct SslSummary {
    eval::MetricsReport teacher_metrics;
    std::size_t labeled_images = 0;
    std::size_t unlabeled_images = 0;
    std::vector<SslRound> rounds;
};

struct OverlayItem {
    data::ImageSample sample;
    std::vector<detector::Prediction> predictions;
};

struct RunRecord {
    std::string config_echo;
    Mode mode = Mode::detection_plus_regression;
    std::vector<EpochSummary> epochs;
    std::vector<losses::LossBreakdown> step_losses;
    eval::MetricsReport metrics;           ///< test split
    eval::MetricsReport baseline_metrics;  ///< same predictions, stems at box centers
    std::optional<SslSummary> ssl;
    double wall_seconds = 0.0;
    std::string checkpoint_path;
    std::vector<double> params;
    std::vector<OverlayItem> overlays;  ///< first test images
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains and evaluates per the config. `config_text`, when given, is echoed
/// verbatim in the record instead of the re-serialized config.
RunRecord run_experiment(const ExperimentConfig& config, const std::string& config_text = {},
                         const ProgressFn& progress = {});

/// Same as above on caller-supplied samples (the dataset source is ignored).
RunRecord run_experiment(const ExperimentConfig& config, std::span<const data::ImageSample> samples,
                         const std::string& config_text = {}, const ProgressFn& progress = {});

/// Writes metrics.json, loss.svg and overlay_<n>.ppm. Throws IoError when the
/// directory cannot be written.
void emit_report(const RunRecord& record, const std::string& output_dir);

/// Test-split metrics stored in a metrics.json written by emit_report.
eval::MetricsReport read_report_metrics(const std::string& metrics_file);

struct StemMarker {
    Point point;
    bool predicted = false;
};

/// One marker per true weed stem and per predicted weed stem.
std::vector<StemMarker> overlay_markers(const OverlayItem& item);

/// Draws boxes and stem markers: green for predictions, red for ground truth.
data::Image render_overlay(const OverlayItem& item);

/// Loss curves (total and the three terms per step) as a standalone SVG.
std::string loss_curve_svg(std::span<const losses::LossBreakdown> steps);

/// k priors (width, height) by k-means over box sizes with 1 - IoU distance.
std::vector<detector::Anchor> compute_anchors(std::span<const data::ImageSample> samples, int k,
                                              std::uint64_t seed = 0);

}  // namespace wsd::experiment
