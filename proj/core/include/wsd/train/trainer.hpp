#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "wsd/data/augment.hpp"
#include "wsd/data/sample.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/losses/losses.hpp"

namespace wsd::train {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 1e-3;
    double momentum = 0.9;       ///< sgd only
    double beta1 = 0.9;          ///< adam only
    double beta2 = 0.999;        ///< adam only
    double epsilon = 1e-8;       ///< adam only
    double weight_decay = 0.0;
    double grad_clip_norm = 10.0;  ///< global L2 clip; 0 disables

    void validate() const;
};

class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::size_t parameter_count);

    /// Applies one update in place. `grad` may be modified (clipping).
    void step(std::span<double> params, std::span<double> grad);

    std::uint64_t steps() const { return steps_; }

private:
    OptimizerConfig config_;
    std::vector<double> first_;
    std::vector<double> second_;
    std::uint64_t steps_ = 0;
};

/// How ground truth becomes grid targets.
enum class TargetMode {
    detection,  ///< box-center cell, best anchor; all heads supervised
    stem_only,  ///< stem cell, anchor 0; only the stem head supervised
};

detector::GridTarget make_target(std::span<const data::LabeledInstance> instances,
                                 const detector::DetectorConfig& config, TargetMode mode);

/// Forward, loss and backward over one batch. `grad` is overwritten with the
/// gradient of the batch loss.
losses::LossBreakdown batch_gradient(const detector::Network& network, std::span<const double> params,
                                     std::span<const data::ImageSample> batch, TargetMode mode,
                                     const losses::LossWeights& weights, const losses::LossOptions& options,
                                     std::span<double> grad);

struct TrainOptions {
    int batch_size = 8;
    OptimizerConfig optimizer;
    losses::LossWeights weights;
    losses::LossOptions loss_options;
    TargetMode mode = TargetMode::detection;
    /// Photometric jitter on every training image (student pathway).
    bool weak_augmentation = true;
    /// Augmentation applied to labeled images; strong adds crop and flip.
    data::AugmentationKind labeled_augmentation = data::AugmentationKind::weak;
    /// Augmentation applied to pseudo-labeled images.
    data::AugmentationKind pseudo_augmentation = data::AugmentationKind::weak;
    data::AugmentationRanges ranges;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Endless epoch-shuffled index stream with its own generator.
class SampleStream {
public:
    SampleStream(std::size_t size, std::uint64_t seed);
    std::size_t next();
    bool empty() const { return order_.empty(); }

private:
    void reshuffle();

    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::mt19937_64 rng_;
};

/// Owns optimizer state and sampling streams for one optimization run over a
/// labeled set and an optional pseudo-labeled set. Each step draws
/// round(batch_size * pseudo_ratio) pseudo samples (0 when none exist) and
/// fills the rest from the labeled set.
class Trainer {
public:
    Trainer(const detector::Network& network, TrainOptions options, std::span<const data::ImageSample> labeled,
            std::span<const data::ImageSample> pseudo = {}, double pseudo_ratio = 0.0);

    losses::LossBreakdown step(std::vector<double>& params);

    /// Steps that make one pass over the labeled set.
    int steps_per_epoch() const;
    std::uint64_t steps_taken() const { return optimizer_.steps(); }

private:
    data::ImageSample prepare(const data::ImageSample& sample, data::AugmentationKind kind);

    const detector::Network& network_;
    TrainOptions options_;
    std::span<const data::ImageSample> labeled_;
    std::span<const data::ImageSample> pseudo_;
    int pseudo_per_batch_ = 0;
    Optimizer optimizer_;
    SampleStream labeled_stream_;
    SampleStream pseudo_stream_;
    std::mt19937_64 augment_rng_;
    std::vector<double> grad_;
};

}  // namespace wsd::train
