#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "wsd/data/augment.hpp"
#include "wsd/data/synth.hpp"
#include "wsd/errors.hpp"
#include "wsd/ssl/ssl.hpp"

using namespace wsd;
using namespace wsd::ssl;

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

std::vector<data::ImageSample> scenes(int n, std::uint64_t base, bool labeled = true) {
    std::vector<data::ImageSample> out;
    for (int i = 0; i < n; ++i) {
        data::SyntheticSceneSpec spec;
        spec.image_size = 64;
        spec.crop_count = 1;
        spec.weed_count = 2;
        spec.seed = base + static_cast<std::uint64_t>(i);
        auto s = data::generate_scene(spec);
        s.id = "scene_" + std::to_string(i);
        if (!labeled) {
            s.instances.clear();
            s.labeled = false;
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Head weights scaled up and objectness forced on, so every cell fires with
// class confidences spread over a wide range.
std::vector<double> confident_teacher(const detector::Network& net, std::uint64_t seed) {
    auto p = net.initial_parameters(seed);
    const auto& head = net.slots().back();
    for (std::size_t k = 0; k < head.weight_count(); ++k) p[head.weight_offset + k] *= 150.0;
    const int c = net.config().channels().size();
    for (int a = 0; a < net.config().num_anchors(); ++a) {
        p[head.bias_offset + static_cast<std::size_t>(a) * c] = 8.0;
    }
    return p;
}

double softmax_max_oracle(const std::vector<double>& z) {
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    double best = 0.0;
    for (double v : z) best = std::max(best, std::exp(v) / denom);
    return best;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Ssl, ConfScoreIsMaxSoftmax) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> z(4);
        for (auto& v : z) v = n(rng);
        EXPECT_NEAR(conf_score(z), softmax_max_oracle(z), 1e-14);
    }
    EXPECT_NEAR(conf_score(std::vector<double>{0, 0, 0, 0}), 0.25, 1e-15);
    EXPECT_NEAR(conf_score(std::vector<double>{1000, 0}), 1.0, 1e-15);
    EXPECT_THROW(conf_score(std::vector<double>{}), ValidationError);
}

TEST(Ssl, SimScoreIsMaxCosine) {
    WeedBank bank(16, 1);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> stored;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> v(5);
        for (auto& x : v) x = n(rng);
        stored.push_back(v);
        bank.add("w" + std::to_string(i), v);
    }
    for (int t = 0; t < 50; ++t) {
        std::vector<double> q(5);
        for (auto& x : q) x = n(rng);
        double best = -1.0;
        for (const auto& s : stored) best = std::max(best, cosine(q, s));
        EXPECT_NEAR(sim_score(q, bank), best, 1e-12);
    }
    EXPECT_NEAR(sim_score(stored[2], bank), 1.0, 1e-12);
    EXPECT_THROW(sim_score(std::vector<double>(5, 0.0), bank), ValidationError);
    EXPECT_THROW(sim_score(std::vector<double>(4, 1.0), bank), ValidationError);
}

TEST(Ssl, EmptyBankRaisesGatingError) {
    const WeedBank bank;
    EXPECT_THROW(sim_score(std::vector<double>{1.0, 0.0}, bank), GatingError);

    const detector::Network net(toy_config());
    const auto teacher = confident_teacher(net, 1);
    const auto unlabeled = scenes(2, 50, false);
    SSLConfig cfg;
    cfg.tau = 0.3;
    EXPECT_THROW(generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 0), GatingError);
    cfg.require_bank = false;
    const auto out = generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 0);
    ASSERT_GT(count_labels(out), 0u);
    for (const auto& im : out) {
        for (const auto& l : im.labels) EXPECT_FALSE(l.sim_score.has_value());
    }
}

TEST(Ssl, BankRejectsDegenerateVectors) {
    WeedBank bank(4);
    EXPECT_THROW(bank.add("z", {0.0, 0.0}), ValidationError);
    EXPECT_THROW(bank.add("n", {std::nan(""), 1.0}), ValidationError);
    bank.add("a", {1.0, 2.0});
    EXPECT_THROW(bank.add("b", {1.0, 2.0, 3.0}), ValidationError);
    EXPECT_THROW(WeedBank(0), ConfigError);
}

TEST(Ssl, BankCapacityAndReservoirUniformity) {
    constexpr int offered = 200;
    constexpr std::size_t cap = 20;
    constexpr int trials = 2000;
    std::vector<int> kept(offered, 0);
    for (int t = 0; t < trials; ++t) {
        WeedBank bank(cap, static_cast<std::uint64_t>(t));
        for (int i = 0; i < offered; ++i) bank.add(std::to_string(i), {1.0, static_cast<double>(i)});
        ASSERT_EQ(bank.size(), cap);
        ASSERT_EQ(bank.offered(), static_cast<std::size_t>(offered));
        for (const auto& e : bank.entries()) ++kept[std::stoi(e.source)];
    }
    // Each vector survives with probability cap / offered; check deciles.
    const double expected = trials * static_cast<double>(cap) / offered * (offered / 10);
    for (int d = 0; d < 10; ++d) {
        int sum = 0;
        for (int i = d * offered / 10; i < (d + 1) * offered / 10; ++i) sum += kept[i];
        EXPECT_NEAR(sum, expected, 0.06 * expected) << "decile " << d;
    }
}

TEST(Ssl, EmaFollowsUpdateLaw) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> teacher(100), student(100);
    for (auto& v : teacher) v = n(rng);
    for (auto& v : student) v = n(rng);
    for (double m : {0.0, 0.5, 0.9, 0.999}) {
        auto t = teacher;
        ema_update(t, student, m);
        for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t[i], m * teacher[i] + (1 - m) * student[i], 1e-9);
    }
    auto t = teacher;
    EXPECT_THROW(ema_update(t, std::vector<double>(99), 0.9), ConfigError);
    EXPECT_THROW(ema_update(t, student, 1.0), ConfigError);
}

TEST(Ssl, ConfigValidation) {
    SSLConfig c;
    EXPECT_NO_THROW(c.validate());
    c.tau = 1.0;
    EXPECT_NO_THROW(c.validate());
    c.tau = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.xi = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.unlabeled_batch_ratio = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Ssl, LabelsRespectBothGates) {
    const detector::Network net(toy_config());
    const auto teacher = confident_teacher(net, 2);
    const auto labeled = scenes(3, 10);
    const auto unlabeled = scenes(4, 60, false);
    const auto bank = build_weed_bank(net, teacher, labeled, 64, 0);
    ASSERT_EQ(bank.size(), 6u);
    SSLConfig cfg;
    cfg.tau = 0.4;
    cfg.xi = 0.2;
    const auto out = generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 7);
    ASSERT_EQ(out.size(), unlabeled.size());
    ASSERT_GT(count_labels(out), 0u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].sample, unlabeled[i]);
        for (const auto& l : out[i].labels) {
            EXPECT_GT(l.conf_score, cfg.tau);
            EXPECT_NEAR(l.conf_score, softmax_max_oracle(l.prediction.class_logits), 1e-12);
            EXPECT_EQ(l.image_id, unlabeled[i].id);
            if (l.prediction.class_id == data::ClassId::weed) {
                ASSERT_TRUE(l.sim_score.has_value());
                EXPECT_GT(*l.sim_score, cfg.xi);
                EXPECT_NEAR(*l.sim_score, sim_score(l.prediction.embedding, bank), 1e-12);
            } else {
                EXPECT_FALSE(l.sim_score.has_value());
            }
        }
    }
}

TEST(Ssl, ClosedGatesYieldNoLabels) {
    const detector::Network net(toy_config());
    const auto labeled = scenes(2, 10);
    const auto unlabeled = scenes(3, 60, false);
    auto teacher = confident_teacher(net, 2);
    const auto bank = build_weed_bank(net, teacher, labeled, 64, 0);
    SSLConfig cfg;
    cfg.tau = 1.0;
    EXPECT_EQ(count_labels(generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 1)), 0u);

    // Objectness suppressed everywhere: nothing survives decoding.
    cfg.tau = 0.3;
    const auto& head = net.slots().back();
    const int c = net.config().channels().size();
    for (int a = 0; a < net.config().num_anchors(); ++a) {
        teacher[head.bias_offset + static_cast<std::size_t>(a) * c] = -40.0;
    }
    EXPECT_EQ(count_labels(generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 1)), 0u);
}

TEST(Ssl, LabelCountMonotoneInThresholds) {
    const detector::Network net(toy_config());
    const auto teacher = confident_teacher(net, 3);
    const auto bank = build_weed_bank(net, teacher, scenes(3, 10), 64, 0);
    const auto unlabeled = scenes(6, 80, false);
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double tau : {0.26, 0.35, 0.5, 0.7, 0.9, 0.99}) {
        SSLConfig cfg;
        cfg.tau = tau;
        cfg.xi = -0.5;
        const auto n = count_labels(generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 11));
        EXPECT_LE(n, previous) << "tau " << tau;
        previous = n;
    }
    previous = std::numeric_limits<std::size_t>::max();
    for (double xi : {-0.9, -0.2, 0.2, 0.5, 0.8, 0.99}) {
        SSLConfig cfg;
        cfg.tau = 0.3;
        cfg.xi = xi;
        const auto n = count_labels(generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 11));
        EXPECT_LE(n, previous) << "xi " << xi;
        previous = n;
    }
}

TEST(Ssl, LabelsMappedBackToOriginalFrame) {
    const detector::Network net(toy_config());
    const auto teacher = confident_teacher(net, 4);
    const auto unlabeled = scenes(4, 90, false);
    SSLConfig cfg;
    cfg.tau = 0.3;
    cfg.require_bank = false;
    const std::uint64_t seed = 21;
    const auto out = generate_pseudo_labels(net, teacher, unlabeled, WeedBank{}, cfg, seed);

    // Replay: same recipe stream, decode in the augmented frame, map back.
    std::mt19937_64 rng(seed);
    bool any_geometric = false;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        const auto recipe = data::sample_recipe(data::AugmentationKind::strong, 64, 64, rng);
        const auto [aug, map] = data::apply_augmentation(unlabeled[i], recipe);
        any_geometric = any_geometric || !map.is_identity();
        const auto preds =
            detector::decode(net.forward(detector::normalize(aug.image), teacher), net.config(), cfg.tau, cfg.nms_iou);
        std::size_t k = 0;
        for (const auto& p : preds) {
            if (!(conf_score(p.class_logits) > cfg.tau)) continue;
            const Box b = map.to_original(p.bbox);
            const Box clamped{std::clamp(b.x_min, 0.0, 64.0), std::clamp(b.y_min, 0.0, 64.0),
                              std::clamp(b.x_max, 0.0, 64.0), std::clamp(b.y_max, 0.0, 64.0)};
            if (clamped.width() < 1.0 || clamped.height() < 1.0) continue;
            ASSERT_LT(k, out[i].labels.size());
            const auto& got = out[i].labels[k++];
            EXPECT_EQ(got.recipe_id, recipe.id());
            EXPECT_NEAR(got.prediction.bbox.x_min, clamped.x_min, 1e-9);
            EXPECT_NEAR(got.prediction.bbox.y_min, clamped.y_min, 1e-9);
            EXPECT_NEAR(got.prediction.bbox.x_max, clamped.x_max, 1e-9);
            EXPECT_NEAR(got.prediction.bbox.y_max, clamped.y_max, 1e-9);
            if (p.stem) {
                ASSERT_TRUE(got.prediction.stem.has_value());
                const Point s = map.to_original(*p.stem);
                const auto& g = got.prediction.stem;
                EXPECT_NEAR(g->x, std::clamp(s.x, clamped.x_min, clamped.x_max), 1e-9);
                EXPECT_NEAR(g->y, std::clamp(s.y, clamped.y_min, clamped.y_max), 1e-9);
            }
        }
        EXPECT_EQ(k, out[i].labels.size());
    }
    EXPECT_TRUE(any_geometric);
}

TEST(Ssl, TrainingSampleCarriesLabels) {
    PseudoLabeledImage im{scenes(1, 5, false)[0], {}};
    PseudoLabel weed;
    weed.prediction.class_id = data::ClassId::weed;
    weed.prediction.bbox = {10, 10, 20, 20};
    weed.prediction.stem = Point{30, 12};
    PseudoLabel crop;
    crop.prediction.class_id = data::ClassId::maize;
    crop.prediction.bbox = {30, 30, 40, 44};
    im.labels = {weed, crop};
    const auto s = to_training_sample(im);
    ASSERT_EQ(s.instances.size(), 2u);
    EXPECT_TRUE(s.labeled);
    EXPECT_EQ(s.instances[0].stem, (Point{20, 12}));
    EXPECT_FALSE(s.instances[1].stem.has_value());
    EXPECT_NO_THROW(data::validate(s));
}

TEST(Ssl, TrainStudentArityAndEma) {
    const detector::Network net(toy_config());
    const auto labeled = scenes(4, 30);
    const auto pseudo = scenes(4, 40);
    auto student = net.initial_parameters(1);
    auto teacher = net.initial_parameters(2);
    SSLConfig cfg;
    cfg.ema_momentum = 0.8;
    train::TrainOptions opts;
    opts.batch_size = 4;
    opts.optimizer.kind = train::OptimizerKind::adam;
    const auto r = train_student(net, labeled, pseudo, student, teacher, cfg, opts, 3);
    EXPECT_EQ(r.history.size(), 3u);
    EXPECT_EQ(r.student.size(), student.size());
    EXPECT_NE(r.student, student);

    const auto one = train_student(net, labeled, pseudo, student, teacher, cfg, opts, 1);
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        EXPECT_NEAR(one.teacher[i], 0.8 * teacher[i] + 0.2 * one.student[i], 1e-9);
    }
    EXPECT_THROW(train_student(net, labeled, pseudo, student, teacher, cfg, opts, 0), ConfigError);
    EXPECT_THROW(train_student(net, {}, pseudo, student, teacher, cfg, opts, 1), DataError);
}

TEST(Ssl, ZeroRatioMatchesSupervisedTraining) {
    const detector::Network net(toy_config());
    const auto labeled = scenes(5, 30);
    const auto pseudo = scenes(3, 40);
    const auto init = net.initial_parameters(3);
    SSLConfig cfg;
    cfg.unlabeled_batch_ratio = 0.0;
    train::TrainOptions opts;
    opts.batch_size = 2;
    opts.seed = 9;
    const auto r = train_student(net, labeled, pseudo, init, init, cfg, opts, 4);

    auto params = init;
    train::Trainer trainer(net, opts, labeled);
    for (int s = 0; s < 4; ++s) trainer.step(params);
    EXPECT_EQ(r.student, params);
}

TEST(Ssl, CacheRoundTrip) {
    const detector::Network net(toy_config());
    const auto teacher = confident_teacher(net, 5);
    const auto bank = build_weed_bank(net, teacher, scenes(2, 10), 64, 0);
    const auto unlabeled = scenes(3, 70, false);
    SSLConfig cfg;
    cfg.tau = 0.3;
    cfg.xi = -0.5;
    const auto out = generate_pseudo_labels(net, teacher, unlabeled, bank, cfg, 2);
    ASSERT_GT(count_labels(out), 0u);
    const auto path = std::filesystem::temp_directory_path() / "wsd_pseudo_cache_test.jsonl";
    write_pseudo_label_cache(path, out);
    const auto back = read_pseudo_label_cache(path, unlabeled);
    ASSERT_EQ(back.size(), out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        ASSERT_EQ(back[i].labels.size(), out[i].labels.size());
        EXPECT_EQ(to_training_sample(back[i]), to_training_sample(out[i]));
        for (std::size_t k = 0; k < out[i].labels.size(); ++k) {
            EXPECT_EQ(back[i].labels[k].conf_score, out[i].labels[k].conf_score);
            EXPECT_EQ(back[i].labels[k].sim_score, out[i].labels[k].sim_score);
            EXPECT_EQ(back[i].labels[k].recipe_id, out[i].labels[k].recipe_id);
        }
    }
    EXPECT_THROW(read_pseudo_label_cache(path, std::vector<data::ImageSample>{}), DataError);
    std::filesystem::remove(path);
}
