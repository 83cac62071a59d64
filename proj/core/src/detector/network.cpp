#include "wsd/detector/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Core>

#include "wsd/errors.hpp"

namespace wsd::detector {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

int out_extent(int in, int stride) {
    return (in - 1) / stride + 1;
}

// 3x3, padding 1. cols has shape (in_channels * 9, out_h * out_w).
void im2col(const double* x, int channels, int h, int w, int stride, Mat& cols) {
    const int oh = out_extent(h, stride);
    const int ow = out_extent(w, stride);
    cols.resize(static_cast<Eigen::Index>(channels) * 9, static_cast<Eigen::Index>(oh) * ow);
    for (int c = 0; c < channels; ++c) {
        const double* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = cols.row(c * 9 + ky * 3 + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    double* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const Mat& cols, int channels, int h, int w, int stride, double* dx) {
    const int oh = out_extent(h, stride);
    const int ow = out_extent(w, stride);
    std::fill(dx, dx + static_cast<std::size_t>(channels) * h * w, 0.0);
    for (int c = 0; c < channels; ++c) {
        double* plane = dx + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* row = cols.row(c * 9 + ky * 3 + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) {
                        continue;
                    }
                    const double* src = row + static_cast<std::size_t>(oy) * ow;
                    double* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix >= 0 && ix < w) {
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

struct ForwardCache::Impl {
    std::vector<Mat> cols;     // per backbone stage input, im2col'd
    std::vector<Mat> outputs;  // per backbone stage, post-activation
    std::vector<int> in_h;
    std::vector<int> in_w;
};

ForwardCache::ForwardCache() : impl_(std::make_unique<Impl>()) {}
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

NormalizedImage normalize(const data::Image& image) {
    NormalizedImage out;
    out.width = image.width;
    out.height = image.height;
    const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
    out.data.resize(plane * 3);
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            out.data[c * plane + p] = image.pixels[p * 3 + c] / 255.0 - 0.5;
        }
    }
    return out;
}

Network::Network(DetectorConfig config) : config_(std::move(config)) {
    config_.validate();
    int in = 3;
    std::size_t offset = 0;
    for (const auto& stage : config_.stages) {
        ConvSlot s{in, stage.channels, 3, stage.stride, offset, 0};
        offset += s.weight_count();
        s.bias_offset = offset;
        offset += static_cast<std::size_t>(s.out_channels);
        slots_.push_back(s);
        in = stage.channels;
    }
    ConvSlot head{in, config_.num_anchors() * config_.channels().size(), 1, 1, offset, 0};
    offset += head.weight_count();
    head.bias_offset = offset;
    offset += static_cast<std::size_t>(head.out_channels);
    slots_.push_back(head);
    parameter_count_ = offset;
}

std::vector<double> Network::initial_parameters(std::uint64_t seed) const {
    std::vector<double> p(parameter_count_, 0.0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& s = slots_[i];
        const bool is_head = i + 1 == slots_.size();
        const double fan_in = static_cast<double>(s.in_channels) * s.kernel * s.kernel;
        const double stddev = is_head ? 0.01 : std::sqrt(2.0 / fan_in);
        std::normal_distribution<double> dist(0.0, stddev);
        for (std::size_t k = 0; k < s.weight_count(); ++k) {
            p[s.weight_offset + k] = dist(rng);
        }
        if (is_head) {
            const int c = config_.channels().size();
            for (int a = 0; a < config_.num_anchors(); ++a) {
                p[s.bias_offset + static_cast<std::size_t>(a) * c + ChannelLayout::objectness] =
                    config_.objectness_bias_init;
            }
        }
    }
    return p;
}

void Network::check_params(std::span<const double> params) const {
    if (params.size() != parameter_count_) {
        throw ConfigError("detector: parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                          std::to_string(parameter_count_));
    }
}

RawGridOutput Network::forward(const NormalizedImage& image, std::span<const double> params,
                               ForwardCache* cache) const {
    check_params(params);
    if (image.width != config_.input_size || image.height != config_.input_size ||
        image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw ConfigError("detector: input image is " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + ", expected " + std::to_string(config_.input_size) +
                          " square");
    }
    ForwardCache::Impl local;
    ForwardCache::Impl& c = cache ? cache->impl() : local;
    const std::size_t stages = config_.stages.size();
    c.cols.resize(stages);
    c.outputs.resize(stages);
    c.in_h.resize(stages);
    c.in_w.resize(stages);

    int h = image.height;
    int w = image.width;
    const double slope = config_.leaky_slope;
    const double* x = image.data.data();
    for (std::size_t i = 0; i < stages; ++i) {
        const auto& s = slots_[i];
        c.in_h[i] = h;
        c.in_w[i] = w;
        im2col(x, s.in_channels, h, w, s.stride, c.cols[i]);
        const ConstMap weights(params.data() + s.weight_offset, s.out_channels,
                               static_cast<Eigen::Index>(s.in_channels) * 9);
        const Eigen::Map<const Eigen::VectorXd> bias(params.data() + s.bias_offset, s.out_channels);
        Mat& out = c.outputs[i];
        out.noalias() = weights * c.cols[i];
        out.colwise() += bias;
        out = out.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
        h = out_extent(h, s.stride);
        w = out_extent(w, s.stride);
        x = out.data();
    }

    const auto& head = slots_.back();
    const Mat& feat = c.outputs.back();  // (E, S*S)
    const ConstMap head_w(params.data() + head.weight_offset, head.out_channels, head.in_channels);
    const Eigen::Map<const Eigen::VectorXd> head_b(params.data() + head.bias_offset, head.out_channels);
    Mat raw = head_w * feat;
    raw.colwise() += head_b;

    RawGridOutput r = RawGridOutput::zeros(config_);
    // grid is [cell][anchor*channel], the transpose of raw.
    MutMap(r.grid.data(), raw.cols(), raw.rows()) = raw.transpose();
    MutMap(r.features.data(), feat.cols(), feat.rows()) = feat.transpose();
    return r;
}

void Network::backward(const ForwardCache& cache, const RawGridOutput& upstream, std::span<const double> params,
                       std::span<double> grad) const {
    check_params(params);
    if (grad.size() != parameter_count_) {
        throw ConfigError("detector: gradient vector size mismatch");
    }
    const auto& c = cache.impl();
    const std::size_t stages = config_.stages.size();
    if (c.outputs.size() != stages) {
        throw ConfigError("detector: backward() needs a cache filled by forward()");
    }
    const auto& head = slots_.back();
    const Mat& feat = c.outputs.back();
    const Eigen::Index cells = feat.cols();
    if (upstream.grid.size() != static_cast<std::size_t>(cells * head.out_channels)) {
        throw ConfigError("detector: upstream gradient shape mismatch");
    }

    const Mat d_raw = ConstMap(upstream.grid.data(), cells, head.out_channels).transpose();
    MutMap(grad.data() + head.weight_offset, head.out_channels, head.in_channels).noalias() += d_raw * feat.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + head.bias_offset, head.out_channels) += d_raw.rowwise().sum();

    const ConstMap head_w(params.data() + head.weight_offset, head.out_channels, head.in_channels);
    Mat d_out = head_w.transpose() * d_raw;
    if (!upstream.features.empty()) {
        d_out += ConstMap(upstream.features.data(), cells, feat.rows()).transpose();
    }

    const double slope = config_.leaky_slope;
    std::vector<double> d_in;
    for (std::size_t i = stages; i-- > 0;) {
        const auto& s = slots_[i];
        const Mat& out = c.outputs[i];
        const Mat d_pre = d_out.binaryExpr(out, [slope](double g, double o) { return o > 0.0 ? g : slope * g; });
        MutMap(grad.data() + s.weight_offset, s.out_channels, static_cast<Eigen::Index>(s.in_channels) * 9)
            .noalias() += d_pre * c.cols[i].transpose();
        Eigen::Map<Eigen::VectorXd>(grad.data() + s.bias_offset, s.out_channels) += d_pre.rowwise().sum();
        if (i == 0) {
            break;
        }
        const ConstMap weights(params.data() + s.weight_offset, s.out_channels,
                               static_cast<Eigen::Index>(s.in_channels) * 9);
        const Mat d_cols = weights.transpose() * d_pre;
        d_in.resize(static_cast<std::size_t>(s.in_channels) * c.in_h[i] * c.in_w[i]);
        col2im(d_cols, s.in_channels, c.in_h[i], c.in_w[i], s.stride, d_in.data());
        d_out = ConstMap(d_in.data(), s.in_channels, static_cast<Eigen::Index>(c.in_h[i]) * c.in_w[i]);
    }
}

RawGridOutput forward(const NormalizedImage& image, std::span<const double> params, const DetectorConfig& config) {
    return Network(config).forward(image, params);
}

}  // namespace wsd::detector
