#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "wsd/data/image.hpp"
#include "wsd/detector/config.hpp"
#include "wsd/detector/raw_output.hpp"

namespace wsd::detector {

/// Planar float image: [channel][y][x], values scaled to [-0.5, 0.5].
struct NormalizedImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;
};

NormalizedImage normalize(const data::Image& image);

/// Offsets of every convolution's weights and biases inside the flat
/// parameter vector.
struct ConvSlot {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

/// Activations kept by forward() for a subsequent backward().
class ForwardCache {
public:
    ForwardCache();
    ~ForwardCache();
    ForwardCache(ForwardCache&&) noexcept;
    ForwardCache& operator=(ForwardCache&&) noexcept;

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

/// Backbone of strided 3x3 convolutions with leaky ReLU, followed by a 1x1
/// convolution head over the final feature map. Parameters live outside the
/// network so teacher and student can share one instance.
class Network {
public:
    explicit Network(DetectorConfig config);

    const DetectorConfig& config() const { return config_; }
    std::size_t parameter_count() const { return parameter_count_; }
    const std::vector<ConvSlot>& slots() const { return slots_; }

    std::vector<double> initial_parameters(std::uint64_t seed) const;

    RawGridOutput forward(const NormalizedImage& image, std::span<const double> params,
                          ForwardCache* cache = nullptr) const;

    /// Accumulates into `grad` the parameter gradient given upstream
    /// derivatives w.r.t. the grid (and optionally the features; an empty
    /// features vector means zero).
    void backward(const ForwardCache& cache, const RawGridOutput& upstream, std::span<const double> params,
                  std::span<double> grad) const;

private:
    void check_params(std::span<const double> params) const;

    DetectorConfig config_;
    std::vector<ConvSlot> slots_;
    std::size_t parameter_count_ = 0;
};

/// Convenience wrapper: one forward pass without caching.
RawGridOutput forward(const NormalizedImage& image, std::span<const double> params, const DetectorConfig& config);

}  // namespace wsd::detector
