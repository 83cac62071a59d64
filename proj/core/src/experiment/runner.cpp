#include "wsd/experiment/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "wsd/data/annotations.hpp"
#include "wsd/data/augment.hpp"
#include "wsd/data/synth.hpp"
#include "wsd/detector/checkpoint.hpp"
#include "wsd/errors.hpp"
#include "wsd/ssl/ssl.hpp"
#include "wsd/train/trainer.hpp"

namespace wsd::experiment {

namespace fs = std::filesystem;

Splits split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
    const auto n_val = std::min(n - std::min(n, n_train),
                                static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n))));
    Splits s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size()),
                 order.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val), order.end());
    return s;
}

std::vector<data::ImageSample> load_dataset(const ExperimentConfig& config) {
    std::vector<data::ImageSample> out;
    if (config.dataset.synthetic) {
        const auto& syn = *config.dataset.synthetic;
        std::mt19937_64 rng(syn.base.seed ^ 0x5eedULL);
        std::uniform_int_distribution<int> crops(syn.min_crops, syn.max_crops);
        std::uniform_int_distribution<int> weeds(syn.min_weeds, syn.max_weeds);
        for (int i = 0; i < syn.count; ++i) {
            auto spec = syn.base;
            spec.seed = syn.base.seed + static_cast<std::uint64_t>(i);
            spec.crop_count = crops(rng);
            spec.weed_count = weeds(rng);
            for (;;) {
                try {
                    out.push_back(data::generate_scene(spec));
                    break;
                } catch (const CapacityError&) {
                    if (spec.weed_count + spec.crop_count <= 1) throw;
                    if (spec.weed_count > spec.crop_count) {
                        --spec.weed_count;
                    } else {
                        --spec.crop_count;
                    }
                }
            }
        }
    } else {
        out = data::load_annotations(config.dataset.directory);
    }
    if (out.empty()) throw DataError("dataset is empty");
    for (auto& s : out) s = data::resize_sample(s, config.detector.input_size);
    return out;
}

std::vector<std::vector<detector::Prediction>> predict(const detector::Network& network,
                                                       std::span<const double> params,
                                                       std::span<const data::ImageSample> samples, Mode mode,
                                                       double threshold) {
    const auto& cfg = network.config();
    const auto ch = cfg.channels();
    const double cell = cfg.cell_size();
    const double size = cfg.input_size;
    std::vector<std::vector<detector::Prediction>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto raw = network.forward(detector::normalize(s.image), params);
        if (mode != Mode::regression_only) {
            out.push_back(detector::decode(raw, cfg, threshold));
            continue;
        }
        // No detector to localize weeds: each true weed is read out at the
        // cell holding its box center, the cell a detector would make
        // responsible for it. The stem location itself is not revealed.
        std::vector<detector::Prediction> preds;
        for (const auto& inst : s.instances) {
            if (!inst.is_weed() || !inst.stem) continue;
            const auto c = detector::cell_of(inst.bbox.center(), cfg);
            detector::Prediction p;
            p.class_id = data::ClassId::weed;
            p.confidence = 1.0;
            p.bbox = inst.bbox;
            p.stem = Point{std::clamp((c.col + raw.at(c.row, c.col, 0, ch.stem_x())) * cell, 0.0, size),
                           std::clamp((c.row + raw.at(c.row, c.col, 0, ch.stem_y())) * cell, 0.0, size)};
            p.row = c.row;
            p.col = c.col;
            preds.push_back(std::move(p));
        }
        out.push_back(std::move(preds));
    }
    return out;
}

namespace {

std::vector<data::ImageSample> gather(std::span<const data::ImageSample> all, const std::vector<std::size_t>& idx) {
    std::vector<data::ImageSample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

std::optional<double> validation_dist(const detector::Network& net, std::span<const double> params,
                                      std::span<const data::ImageSample> val, const ExperimentConfig& cfg) {
    if (val.empty()) return std::nullopt;
    const auto preds = predict(net, params, val, cfg.mode, cfg.eval_threshold);
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        const auto m = eval::match(preds[i], val[i].instances, cfg.iou_floor);
        for (double e : eval::stem_errors(m, preds[i], val[i].instances)) {
            sum += e;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

bool improves(const std::optional<double>& candidate, const std::optional<double>& best, bool have_best) {
    if (!have_best) return true;
    const double c = candidate.value_or(std::numeric_limits<double>::infinity());
    const double b = best.value_or(std::numeric_limits<double>::infinity());
    return c < b;
}

losses::LossBreakdown mean_of(std::span<const losses::LossBreakdown> xs) {
    losses::LossBreakdown m;
    if (xs.empty()) return m;
    for (const auto& x : xs) {
        m.l_cls += x.l_cls;
        m.l_bbox += x.l_bbox;
        m.l_reg += x.l_reg;
        m.total += x.total;
        m.positives += x.positives;
        m.weed_positives += x.weed_positives;
    }
    const double n = static_cast<double>(xs.size());
    m.l_cls /= n;
    m.l_bbox /= n;
    m.l_reg /= n;
    m.total /= n;
    m.positives = static_cast<int>(std::lround(m.positives / n));
    m.weed_positives = static_cast<int>(std::lround(m.weed_positives / n));
    return m;
}

train::TrainOptions train_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    train::TrainOptions o;
    o.batch_size = cfg.batch_size;
    o.optimizer = cfg.optimizer;
    o.weights = cfg.weights;
    o.mode = train::TargetMode::detection;
    o.labeled_augmentation = cfg.train_augmentation;
    if (cfg.mode == Mode::regression_only) {
        o.weights = {0.0, 0.0, cfg.weights.gamma > 0.0 ? cfg.weights.gamma : 1.0};
        o.mode = train::TargetMode::stem_only;
    }
    o.seed = seed;
    return o;
}

struct Fit {
    std::vector<double> best;
    std::optional<double> best_val;
};

Fit fit_supervised(const detector::Network& net, std::vector<double> params,
                   std::span<const data::ImageSample> labeled, std::span<const data::ImageSample> val,
                   const ExperimentConfig& cfg, const std::string& phase, RunRecord& record,
                   const ProgressFn& progress, std::vector<double>* last) {
    train::Trainer trainer(net, train_options(cfg, cfg.seed * 7919 + 17), labeled);
    const int steps = trainer.steps_per_epoch();
    Fit fit;
    bool have = false;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::size_t begin = record.step_losses.size();
        for (int s = 0; s < steps; ++s) record.step_losses.push_back(trainer.step(params));
        EpochSummary summary{epoch, phase,
                             mean_of(std::span(record.step_losses).subspan(begin)), std::nullopt};
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            summary.val_dist = validation_dist(net, params, val, cfg);
            if (improves(summary.val_dist, fit.best_val, have)) {
                fit.best = params;
                fit.best_val = summary.val_dist;
                have = true;
            }
        }
        if (progress) {
            progress(phase + " epoch " + std::to_string(epoch) + " loss " + std::to_string(summary.mean_loss.total) +
                     (summary.val_dist ? " val_dist " + std::to_string(*summary.val_dist) : ""));
        }
        record.epochs.push_back(summary);
    }
    if (last) *last = params;
    return fit;
}

eval::LaserModel laser_for(const ExperimentConfig& cfg, std::span<const data::ImageSample> test) {
    eval::LaserModel laser;
    laser.kill_radius = cfg.kill_radius ? *cfg.kill_radius : eval::default_kill_radius(test);
    laser.max_shots_per_target = cfg.max_shots_per_target;
    return laser;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& config, const std::string& config_text,
                         const ProgressFn& progress) {
    config.validate();
    const auto samples = load_dataset(config);
    return run_experiment(config, samples, config_text, progress);
}

RunRecord run_experiment(const ExperimentConfig& config, std::span<const data::ImageSample> samples,
                         const std::string& config_text, const ProgressFn& progress) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    if (samples.empty()) throw DataError("dataset is empty");

    std::vector<data::ImageSample> labeled_pool;
    std::vector<data::ImageSample> extra_unlabeled;
    for (const auto& s : samples) {
        if (s.image.width != config.detector.input_size || s.image.height != config.detector.input_size) {
            throw ValidationError(s.id + ": image size does not match the detector input");
        }
        (s.labeled ? labeled_pool : extra_unlabeled).push_back(s);
    }
    const auto split = split_indices(labeled_pool.size(), config.splits, config.seed);
    if (split.train.empty() || split.test.empty()) throw DataError("dataset too small for the configured splits");
    auto train_set = gather(labeled_pool, split.train);
    const auto val_set = gather(labeled_pool, split.val);
    const auto test_set = gather(labeled_pool, split.test);

    RunRecord record;
    record.config_echo = config_text.empty() ? to_json(config) : config_text;
    record.mode = config.mode;

    const detector::Network net(config.detector);
    auto init = net.initial_parameters(config.seed);
    std::vector<double> last;
    std::vector<double> final_params;

    const auto laser = laser_for(config, test_set);
    auto test_metrics = [&](std::span<const double> params) {
        const auto preds = predict(net, params, test_set, config.mode, config.eval_threshold);
        return eval::evaluate(preds, test_set, laser, config.detector.cell_size(), config.iou_floor);
    };

    if (config.mode != Mode::ssl) {
        auto fit = fit_supervised(net, init, train_set, val_set, config, "train", record, progress, &last);
        final_params = std::move(fit.best);
    } else {
        std::mt19937_64 rng(config.seed ^ 0xa11ce5ULL);
        std::shuffle(train_set.begin(), train_set.end(), rng);
        const auto n_labeled = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config.labeled_fraction * static_cast<double>(train_set.size()))));
        std::vector<data::ImageSample> labeled(train_set.begin(),
                                               train_set.begin() + static_cast<std::ptrdiff_t>(n_labeled));
        std::vector<data::ImageSample> unlabeled(train_set.begin() + static_cast<std::ptrdiff_t>(n_labeled),
                                                 train_set.end());
        for (auto& s : unlabeled) {
            s.labeled = false;
            s.instances.clear();
        }
        unlabeled.insert(unlabeled.end(), extra_unlabeled.begin(), extra_unlabeled.end());

        auto fit = fit_supervised(net, init, labeled, val_set, config, "teacher", record, progress, nullptr);
        SslSummary summary;
        summary.teacher_metrics = test_metrics(fit.best);
        summary.labeled_images = labeled.size();
        summary.unlabeled_images = unlabeled.size();

        std::vector<double> student = fit.best;
        std::vector<double> teacher = fit.best;
        std::vector<double> best_student;
        std::optional<double> best_val;
        bool have = false;
        const auto base_opts = train_options(config, config.seed * 7919 + 17);
        const int pseudo_per_batch = std::max(
            1, static_cast<int>(std::lround(config.batch_size * config.ssl.unlabeled_batch_ratio)));
        const int steps = std::max<int>(
            1, static_cast<int>((unlabeled.size() + static_cast<std::size_t>(pseudo_per_batch) - 1) /
                                static_cast<std::size_t>(pseudo_per_batch)));
        for (int round = 1; round <= config.ssl_rounds; ++round) {
            const auto bank = ssl::build_weed_bank(net, teacher, labeled, config.ssl.bank_capacity,
                                                   config.seed + static_cast<std::uint64_t>(round));
            std::vector<data::ImageSample> pseudo;
            std::size_t n_labels = 0;
            if (!unlabeled.empty()) {
                const auto labels = ssl::generate_pseudo_labels(
                    net, teacher, unlabeled, bank, config.ssl, config.seed * 31 + static_cast<std::uint64_t>(round));
                n_labels = ssl::count_labels(labels);
                for (const auto& im : labels) {
                    if (!im.labels.empty()) pseudo.push_back(ssl::to_training_sample(im));
                }
                if (!config.output_dir.empty()) {
                    fs::create_directories(config.output_dir);
                    ssl::write_pseudo_label_cache(
                        fs::path(config.output_dir) / ("pseudo_round_" + std::to_string(round) + ".jsonl"), labels);
                }
            }
            auto opts = base_opts;
            opts.seed = base_opts.seed + static_cast<std::uint64_t>(round) * 1000003ULL;
            auto result = ssl::train_student(net, labeled, pseudo, std::move(student), std::move(teacher), config.ssl,
                                             opts, steps);
            student = std::move(result.student);
            teacher = std::move(result.teacher);
            record.step_losses.insert(record.step_losses.end(), result.history.begin(), result.history.end());
            SslRound r{round, bank.size(), n_labels, validation_dist(net, student, val_set, config)};
            record.epochs.push_back({round, "student", mean_of(result.history), r.val_dist});
            if (improves(r.val_dist, best_val, have)) {
                best_student = student;
                best_val = r.val_dist;
                have = true;
            }
            if (progress) {
                progress("student round " + std::to_string(round) + " pseudo " + std::to_string(n_labels) +
                         (r.val_dist ? " val_dist " + std::to_string(*r.val_dist) : ""));
            }
            summary.rounds.push_back(r);
        }
        last = student;
        final_params = std::move(best_student);
        record.ssl = std::move(summary);
    }

    const auto preds = predict(net, final_params, test_set, config.mode, config.eval_threshold);
    record.metrics = eval::evaluate(preds, test_set, laser, config.detector.cell_size(), config.iou_floor);
    record.baseline_metrics = eval::evaluate(
        [&] {
            std::vector<std::vector<detector::Prediction>> b;
            for (const auto& p : preds) b.push_back(eval::bbox_center_baseline(p));
            return b;
        }(),
        test_set, laser, config.detector.cell_size(), config.iou_floor);
    for (std::size_t i = 0; i < std::min<std::size_t>(3, test_set.size()); ++i) {
        record.overlays.push_back({test_set[i], preds[i]});
    }
    if (!config.output_dir.empty()) {
        fs::create_directories(config.output_dir);
        const auto best = fs::path(config.output_dir) / "best.ckpt";
        detector::save_checkpoint(best, config.detector, final_params, record.step_losses.size());
        detector::save_checkpoint(fs::path(config.output_dir) / "last.ckpt", config.detector, last,
                                  record.step_losses.size());
        record.checkpoint_path = best.string();
    }
    record.params = std::move(final_params);
    const char* det = std::getenv("WSD_DETERMINISTIC");
    if (!(det && std::string(det) != "0")) {
        record.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return record;
}

std::vector<detector::Anchor> compute_anchors(std::span<const data::ImageSample> samples, int k,
                                              std::uint64_t seed) {
    if (k < 1) throw ConfigError("compute_anchors: k must be >= 1");
    std::vector<detector::Anchor> dims;
    for (const auto& s : samples) {
        for (const auto& inst : s.instances) dims.push_back({inst.bbox.width(), inst.bbox.height()});
    }
    if (dims.size() < static_cast<std::size_t>(k)) {
        throw DataError("compute_anchors: " + std::to_string(dims.size()) + " boxes for " + std::to_string(k) +
                        " anchors");
    }
    auto dist = [](const detector::Anchor& a, const detector::Anchor& b) {
        const double inter = std::min(a.width, b.width) * std::min(a.height, b.height);
        return 1.0 - inter / (a.width * a.height + b.width * b.height - inter);
    };
    // k-means++ seeding on the IoU distance.
    std::mt19937_64 rng(seed);
    std::vector<detector::Anchor> centers;
    centers.push_back(dims[std::uniform_int_distribution<std::size_t>(0, dims.size() - 1)(rng)]);
    while (centers.size() < static_cast<std::size_t>(k)) {
        std::vector<double> w(dims.size());
        for (std::size_t i = 0; i < dims.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) d = std::min(d, dist(dims[i], c));
            w[i] = d * d;
        }
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        std::size_t pick = std::uniform_int_distribution<std::size_t>(0, dims.size() - 1)(rng);
        if (total > 0.0) pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
        centers.push_back(dims[pick]);
    }
    std::vector<int> assign(dims.size(), -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            int best = 0;
            for (int c = 1; c < k; ++c) {
                if (dist(dims[i], centers[c]) < dist(dims[i], centers[best])) best = c;
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
            double sw = 0.0, sh = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < dims.size(); ++i) {
                if (assign[i] == c) {
                    sw += dims[i].width;
                    sh += dims[i].height;
                    ++n;
                }
            }
            if (n > 0) centers[c] = {sw / n, sh / n};
        }
    }
    std::sort(centers.begin(), centers.end(), [](const auto& a, const auto& b) {
        return a.width * a.height < b.width * b.height;
    });
    return centers;
}

}  // namespace wsd::experiment
