#include "wsd/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wsd/errors.hpp"

namespace wsd::train {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0 || grad_clip_norm < 0.0) {
        throw ConfigError("optimizer: invalid hyper-parameters");
    }
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count)
    : config_(config), first_(parameter_count, 0.0), second_(config.kind == OptimizerKind::adam ? parameter_count : 0, 0.0) {
    config_.validate();
}

void Optimizer::step(std::span<double> params, std::span<double> grad) {
    if (params.size() != first_.size() || grad.size() != first_.size()) {
        throw ConfigError("optimizer: parameter count changed");
    }
    if (config_.grad_clip_norm > 0.0) {
        const double norm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
        if (norm > config_.grad_clip_norm) {
            const double k = config_.grad_clip_norm / norm;
            for (auto& g : grad) g *= k;
        }
    }
    ++steps_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i] + config_.weight_decay * params[i];
            first_[i] = config_.momentum * first_[i] + g;
            params[i] -= lr * first_[i];
        }
        return;
    }
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + config_.weight_decay * params[i];
        first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * g;
        second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * g * g;
        params[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + config_.epsilon);
    }
}

detector::GridTarget make_target(std::span<const data::LabeledInstance> instances,
                                 const detector::DetectorConfig& config, TargetMode mode) {
    return mode == TargetMode::detection ? detector::assign_targets(instances, config)
                                         : detector::assign_stem_targets(instances, config);
}

losses::LossBreakdown batch_gradient(const detector::Network& network, std::span<const double> params,
                                     std::span<const data::ImageSample> batch, TargetMode mode,
                                     const losses::LossWeights& weights, const losses::LossOptions& options,
                                     std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<detector::RawGridOutput> raws;
    std::vector<detector::GridTarget> targets;
    std::vector<detector::ForwardCache> caches(batch.size());
    raws.reserve(batch.size());
    targets.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        raws.push_back(network.forward(detector::normalize(batch[i].image), params, &caches[i]));
        targets.push_back(make_target(batch[i].instances, network.config(), mode));
    }
    std::vector<detector::RawGridOutput> upstream(batch.size());
    const auto loss = losses::combined_loss_and_gradient(raws, targets, weights, options, upstream);
    if (!std::isfinite(loss.total)) {
        throw NumericalError("training: non-finite loss");
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        network.backward(caches[i], upstream[i], params, grad);
    }
    return loss;
}

void TrainOptions::validate() const {
    if (batch_size < 1) {
        throw ConfigError("training: batch_size must be >= 1");
    }
    optimizer.validate();
    weights.validate();
}

SampleStream::SampleStream(std::size_t size, std::uint64_t seed) : order_(size), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
}

void SampleStream::reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::size_t SampleStream::next() {
    if (order_.empty()) {
        throw DataError("sample stream is empty");
    }
    if (cursor_ == order_.size()) {
        reshuffle();
    }
    return order_[cursor_++];
}

Trainer::Trainer(const detector::Network& network, TrainOptions options, std::span<const data::ImageSample> labeled,
                 std::span<const data::ImageSample> pseudo, double pseudo_ratio)
    : network_(network),
      options_(options),
      labeled_(labeled),
      pseudo_(pseudo),
      optimizer_(options.optimizer, network.parameter_count()),
      labeled_stream_(labeled.size(), options.seed),
      pseudo_stream_(pseudo.size(), options.seed ^ 0x9e3779b97f4a7c15ULL),
      augment_rng_(options.seed + 2),
      grad_(network.parameter_count(), 0.0) {
    options_.validate();
    if (labeled.empty()) {
        throw DataError("training needs at least one labeled image");
    }
    if (pseudo_ratio < 0.0 || pseudo_ratio > 1.0) {
        throw ConfigError("training: pseudo ratio must lie in [0, 1]");
    }
    if (!pseudo.empty()) {
        pseudo_per_batch_ = std::min(options_.batch_size - 1,
                                     static_cast<int>(std::lround(options_.batch_size * pseudo_ratio)));
    }
}

int Trainer::steps_per_epoch() const {
    const int per_batch = options_.batch_size - pseudo_per_batch_;
    return static_cast<int>((labeled_.size() + per_batch - 1) / per_batch);
}

data::ImageSample Trainer::prepare(const data::ImageSample& sample, data::AugmentationKind kind) {
    if (!options_.weak_augmentation && kind == data::AugmentationKind::weak) {
        return sample;
    }
    const auto recipe =
        data::sample_recipe(kind, sample.image.width, sample.image.height, augment_rng_, options_.ranges);
    return data::apply_augmentation(sample, recipe).first;
}

losses::LossBreakdown Trainer::step(std::vector<double>& params) {
    std::vector<data::ImageSample> batch;
    batch.reserve(static_cast<std::size_t>(options_.batch_size));
    for (int i = 0; i < options_.batch_size - pseudo_per_batch_; ++i) {
        batch.push_back(prepare(labeled_[labeled_stream_.next()], options_.labeled_augmentation));
    }
    for (int i = 0; i < pseudo_per_batch_; ++i) {
        batch.push_back(prepare(pseudo_[pseudo_stream_.next()], options_.pseudo_augmentation));
    }
    const auto loss = batch_gradient(network_, params, batch, options_.mode, options_.weights, options_.loss_options,
                                     grad_);
    optimizer_.step(params, grad_);
    return loss;
}

}  // namespace wsd::train
