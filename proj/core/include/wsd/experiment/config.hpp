#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "wsd/data/synth.hpp"
#include "wsd/detector/config.hpp"
#include "wsd/eval/metrics.hpp"
#include "wsd/losses/losses.hpp"
#include "wsd/ssl/ssl.hpp"
#include "wsd/train/trainer.hpp"

namespace wsd::experiment {

enum class Mode { regression_only, detection_plus_regression, ssl };

std::string mode_name(Mode mode);
Mode parse_mode(const std::string& name);

/// Scenes `base.seed`, `base.seed + 1`, ... with randomized plant counts.
struct SyntheticDataset {
    int count = 200;
    data::SyntheticSceneSpec base;
    int min_crops = 1;
    int max_crops = 3;
    int min_weeds = 1;
    int max_weeds = 4;
};

struct DatasetSource {
    std::optional<SyntheticDataset> synthetic;  ///< used when set
    std::string directory;                      ///< annotation directory otherwise
};

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct ExperimentConfig {
    Mode mode = Mode::detection_plus_regression;
    DatasetSource dataset;
    SplitFractions splits;
    detector::DetectorConfig detector = detector::default_detector_config(128);
    losses::LossWeights weights;
    ssl::SSLConfig ssl;
    train::OptimizerConfig optimizer;
    int epochs = 300;
    int batch_size = 8;
    /// Augmentation of labeled training images.
    data::AugmentationKind train_augmentation = data::AugmentationKind::weak;
    /// Share of the training split that keeps its labels in ssl mode.
    double labeled_fraction = 0.2;
    /// Pseudo-labeling rounds; each trains the student for one pass over the
    /// unlabeled images.
    int ssl_rounds = 10;
    int eval_every = 1;  ///< epochs between validation passes
    double eval_threshold = 0.15;
    double iou_floor = eval::kDefaultIouFloor;
    std::optional<double> kill_radius;  ///< default: 0.1 x mean test weed diagonal
    int max_shots_per_target = 1;
    std::uint64_t seed = 0;
    /// Empty: no checkpoints or report files.
    std::string output_dir;

    void validate() const;
};

/// Every field, defaults included.
std::string to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const std::string& text);

/// Small synthetic preset that trains in minutes on one core.
ExperimentConfig desk_preset(Mode mode, std::uint64_t seed);

}  // namespace wsd::experiment
