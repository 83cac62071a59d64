#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wsd/data/synth.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/detector/targets.hpp"
#include "wsd/errors.hpp"
#include "wsd/losses/gradient_check.hpp"
#include "wsd/losses/losses.hpp"

using namespace wsd;
using namespace wsd::losses;
using detector::ChannelLayout;

namespace {

detector::DetectorConfig toy_config() {
    detector::DetectorConfig c;
    c.input_size = 64;
    c.grid_size = 4;
    c.anchors = {{12, 12}, {20, 20}};
    c.num_classes = 4;
    c.stages = {{4, 2}, {8, 2}, {8, 2}, {8, 2}};
    c.embedding_dim = 8;
    return c;
}

RawGridOutput random_raw(const detector::DetectorConfig& cfg, std::uint64_t seed) {
    auto raw = RawGridOutput::zeros(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : raw.grid) v = n(rng);
    return raw;
}

std::vector<data::LabeledInstance> scene_instances() {
    return {{data::ClassId::weed, {4, 4, 20, 20}, Point{10, 8}},
            {data::ClassId::maize, {30, 30, 50, 52}, std::nullopt},
            {data::ClassId::weed, {40, 2, 62, 26}, Point{47, 19}}};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight transcription of the loss definitions, one slot at a time.
LossBreakdown oracle(const RawGridOutput& raw, const GridTarget& t, const LossWeights& w) {
    int pos = 0, weeds = 0;
    for (const auto& s : t.slots) {
        pos += s.positive;
        weeds += s.weed;
    }
    double bce = 0.0, ce = 0.0, box = 0.0, reg = 0.0;
    const int k = 4;
    for (std::size_t s = 0; s < t.slots.size(); ++s) {
        const auto& a = t.slots[s];
        const double* v = raw.grid.data() + s * static_cast<std::size_t>(raw.channels);
        const double p = sig(v[0]);
        if (a.positive) {
            bce += -std::log(p);
            double z = 0.0;
            for (int c = 0; c < k; ++c) z += std::exp(v[5 + c]);
            ce += -std::log(std::exp(v[5 + a.class_index]) / z);
            box += std::pow(sig(v[1]) - a.tx, 2) + std::pow(sig(v[2]) - a.ty, 2) + std::pow(v[3] - a.tw, 2) +
                   std::pow(v[4] - a.th, 2);
        } else {
            bce += -0.5 * std::log(1.0 - p);
        }
        if (a.weed) reg += std::pow(v[5 + k] - a.sx, 2) + std::pow(v[6 + k] - a.sy, 2);
    }
    LossBreakdown b;
    b.l_cls = (bce + ce) / std::max(1, pos);
    b.l_bbox = pos ? box / (4.0 * pos) : 0.0;
    b.l_reg = weeds ? reg / weeds : 0.0;
    b.total = w.alpha * b.l_cls + w.beta * b.l_bbox + w.gamma * b.l_reg;
    return b;
}

}  // namespace

TEST(Losses, MatchScalarOracle) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto raw = random_raw(cfg, seed);
        const LossWeights w;
        const auto got = combined_loss(raw, target, w);
        const auto want = oracle(raw, target, w);
        EXPECT_NEAR(got.l_cls, want.l_cls, 1e-12 * std::abs(want.l_cls));
        EXPECT_NEAR(got.l_bbox, want.l_bbox, 1e-12 * std::abs(want.l_bbox));
        EXPECT_NEAR(got.l_reg, want.l_reg, 1e-12 * std::abs(want.l_reg));
        EXPECT_EQ(got.positives, 3);
        EXPECT_EQ(got.weed_positives, 2);
    }
}

TEST(Losses, TotalIsWeightedSum) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    const auto raw = random_raw(cfg, 3);
    const LossWeights w{0.2, 0.3, 0.5};
    const auto b = combined_loss(raw, target, w);
    EXPECT_NEAR(b.total, 0.2 * b.l_cls + 0.3 * b.l_bbox + 0.5 * b.l_reg, 4 * 1e-16 * std::abs(b.total));
}

TEST(Losses, StemTermIgnoresNonWeedAnchors) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    auto raw = random_raw(cfg, 4);
    const double before = stem_regression_loss(raw, target);
    const auto ch = cfg.channels();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 10.0);
    for (int r = 0; r < cfg.grid_size; ++r) {
        for (int c = 0; c < cfg.grid_size; ++c) {
            for (int a = 0; a < cfg.num_anchors(); ++a) {
                if (target.at(r, c, a).weed) continue;
                raw.at(r, c, a, ch.stem_x()) += n(rng);
                raw.at(r, c, a, ch.stem_y()) += n(rng);
            }
        }
    }
    EXPECT_EQ(stem_regression_loss(raw, target), before);
}

TEST(Losses, EmptyTargetsGiveZeroRegressionTerms) {
    const auto cfg = toy_config();
    const auto target = GridTarget::empty(cfg);
    const auto raw = random_raw(cfg, 5);
    const auto b = combined_loss(raw, target, LossWeights{});
    EXPECT_EQ(b.l_bbox, 0.0);
    EXPECT_EQ(b.l_reg, 0.0);
    EXPECT_GT(b.l_cls, 0.0);
    EXPECT_TRUE(std::isfinite(b.total));
}

TEST(Losses, PerfectPredictionHasNearZeroLoss) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    const auto raw = detector::targets_to_raw(target, cfg);
    const auto b = combined_loss(raw, target, LossWeights{});
    EXPECT_LT(b.l_cls, 1e-6);
    EXPECT_LT(b.l_bbox, 1e-12);
    EXPECT_LT(b.l_reg, 1e-20);
}

TEST(Losses, BatchNormalizesAcrossImages) {
    const auto cfg = toy_config();
    const std::vector<data::LabeledInstance> one{scene_instances()[0]};
    const std::vector<GridTarget> targets{detector::assign_targets(scene_instances(), cfg),
                                          detector::assign_targets(one, cfg)};
    const std::vector<RawGridOutput> raws{random_raw(cfg, 1), random_raw(cfg, 2)};
    // Stem term: weed anchors pooled over the batch (2 + 1).
    const auto a = oracle(raws[0], targets[0], {});
    const auto b = oracle(raws[1], targets[1], {});
    EXPECT_NEAR(stem_regression_loss(raws, targets), (a.l_reg * 2 + b.l_reg * 1) / 3.0, 1e-12);
}

TEST(Losses, AnalyticGridGradientMatchesCentralDifferences) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    auto raw = random_raw(cfg, 6);
    const LossWeights w;
    std::vector<RawGridOutput> grads(1);
    combined_loss_and_gradient(std::span(&raw, 1), std::span(&target, 1), w, {}, grads);
    for (std::size_t i = 0; i < raw.grid.size(); ++i) {
        const double h = 1e-6;
        const double keep = raw.grid[i];
        raw.grid[i] = keep + h;
        const double up = combined_loss(raw, target, w).total;
        raw.grid[i] = keep - h;
        const double down = combined_loss(raw, target, w).total;
        raw.grid[i] = keep;
        EXPECT_NEAR(grads[0].grid[i], (up - down) / (2 * h), 1e-8) << "entry " << i;
    }
}

TEST(Losses, ZeroWeightsContributeNoGradient) {
    const auto cfg = toy_config();
    const auto target = detector::assign_targets(scene_instances(), cfg);
    const auto raw = random_raw(cfg, 7);
    std::vector<RawGridOutput> grads(1);
    combined_loss_and_gradient(std::span(&raw, 1), std::span(&target, 1), LossWeights{0.0, 0.0, 1.0}, {}, grads);
    const auto ch = cfg.channels();
    for (std::size_t s = 0; s < target.slots.size(); ++s) {
        for (int c = 0; c < ch.size(); ++c) {
            const double g = grads[0].grid[s * static_cast<std::size_t>(ch.size()) + c];
            if (c == ch.stem_x() || c == ch.stem_y()) {
                if (!target.slots[s].weed) EXPECT_EQ(g, 0.0);
            } else {
                EXPECT_EQ(g, 0.0);
            }
        }
    }
}

TEST(Losses, WeightValidation) {
    EXPECT_THROW((LossWeights{-0.1, 0.3, 0.5}.validate()), ConfigError);
    EXPECT_THROW((LossWeights{0.0, 0.0, 0.0}.validate()), ConfigError);
    EXPECT_NO_THROW((LossWeights{0.0, 0.0, 0.5}.validate()));
}

TEST(GradientCheck, PassesCorrectAndFlagsCorruptedGradient) {
    const auto quad = [](std::span<const double> p, std::span<double> g) {
        double v = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            v += (i + 1.0) * p[i] * p[i] + std::sin(p[i]);
            if (!g.empty()) g[i] = 2.0 * (i + 1.0) * p[i] + std::cos(p[i]);
        }
        return v;
    };
    const std::vector<double> x{0.3, -1.2, 2.0, 0.7, -0.4};
    const auto ok = gradient_check(quad, x, 5, 1e-5, 1);
    EXPECT_LT(ok.max_relative_error, 1e-7);
    EXPECT_EQ(ok.probes, 5);
    const auto doubled = [&](std::span<const double> p, std::span<double> g) {
        const double v = quad(p, g);
        for (auto& gi : g) gi *= 2.0;
        return v;
    };
    EXPECT_NEAR(gradient_check(doubled, x, 5, 1e-5, 1).max_relative_error, 1.0, 1e-6);
}

TEST(GradientCheck, RejectsBadArguments) {
    const auto f = [](std::span<const double> p, std::span<double> g) {
        if (!g.empty()) g[0] = 1.0;
        return p[0];
    };
    const std::vector<double> x{1.0};
    EXPECT_THROW(gradient_check(f, x, 1, 1e-8), ConfigError);
    EXPECT_THROW(gradient_check(f, x, 1, 0.1), ConfigError);
    const auto bad = [](std::span<const double>, std::span<double>) { return std::nan(""); };
    EXPECT_THROW(gradient_check(bad, x, 1, 1e-5), NumericalError);
}

TEST(GradientCheck, NetworkThroughCombinedLoss) {
    const auto cfg = toy_config();
    const detector::Network net(cfg);
    data::SyntheticSceneSpec spec;
    spec.image_size = 64;
    spec.seed = 2;
    const auto sample = data::generate_scene(spec);
    const auto img = detector::normalize(sample.image);
    const auto target = detector::assign_targets(sample.instances, cfg);
    const LossFunction loss = [&](std::span<const double> p, std::span<double> g) {
        detector::ForwardCache cache;
        const auto raw = net.forward(img, p, g.empty() ? nullptr : &cache);
        if (g.empty()) return combined_loss(raw, target, LossWeights{}).total;
        std::vector<RawGridOutput> up(1);
        const auto b = combined_loss_and_gradient(std::span(&raw, 1), std::span(&target, 1), LossWeights{}, {}, up);
        std::fill(g.begin(), g.end(), 0.0);
        net.backward(cache, up[0], p, g);
        return b.total;
    };
    const auto r = gradient_check(loss, net.initial_parameters(4), 30, 1e-5, 9);
    EXPECT_LT(r.max_relative_error, 1e-3) << "worst index " << r.worst_index;
}
