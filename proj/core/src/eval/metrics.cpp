#include "wsd/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "wsd/errors.hpp"

namespace wsd::eval {

using nlohmann::json;

void LaserModel::validate() const {
    if (!(kill_radius > 0.0) || !std::isfinite(kill_radius)) throw ConfigError("laser: kill_radius must be > 0");
    if (max_shots_per_target < 1) throw ConfigError("laser: max_shots_per_target must be >= 1");
}

WeedingResult simulate_weeding(std::span<const Prediction> predictions, std::span<const LabeledInstance> truths,
                               const LaserModel& laser, const std::string& image_id) {
    laser.validate();
    WeedingResult r;
    std::vector<char> alive(truths.size(), 0);
    for (std::size_t j = 0; j < truths.size(); ++j) {
        if (truths[j].is_weed()) {
            ++r.weeds;
            alive[j] = truths[j].stem.has_value();
        }
    }
    std::vector<int> order;
    for (int i = 0; i < static_cast<int>(predictions.size()); ++i) {
        if (predictions[i].class_id == data::ClassId::weed) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return predictions[a].confidence > predictions[b].confidence;
    });
    for (int i : order) {
        const auto& pred = predictions[static_cast<std::size_t>(i)];
        const Point aim = pred.stem.value_or(pred.bbox.center());
        int target = -1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < truths.size(); ++j) {
            if (!alive[j]) continue;
            const double d = distance(aim, *truths[j].stem);
            if (d <= laser.kill_radius && d < best) {
                best = d;
                target = static_cast<int>(j);
            }
        }
        bool near_crop = false;
        for (const auto& t : truths) {
            if (!t.is_weed() && t.bbox.contains(aim)) near_crop = true;
        }
        if (target >= 0) {
            alive[static_cast<std::size_t>(target)] = 0;
            ++r.kills;
            ++r.shots;
            r.log.push_back({image_id, aim, true, target, i, near_crop});
            continue;
        }
        for (int k = 0; k < laser.max_shots_per_target; ++k) {
            ++r.shots;
            r.log.push_back({image_id, aim, false, -1, i, near_crop});
        }
    }
    return r;
}

std::vector<Prediction> bbox_center_baseline(std::vector<Prediction> predictions) {
    for (auto& p : predictions) {
        if (p.class_id == data::ClassId::weed) p.stem = p.bbox.center();
    }
    return predictions;
}

double default_kill_radius(std::span<const data::ImageSample> samples) {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : samples) {
        for (const auto& inst : s.instances) {
            if (inst.is_weed()) {
                sum += std::hypot(inst.bbox.width(), inst.bbox.height());
                ++n;
            }
        }
    }
    if (n == 0) throw DataError("kill radius: no ground-truth weeds");
    return 0.1 * sum / n;
}

MetricsAccumulator::MetricsAccumulator(LaserModel laser, double cell_size, double iou_floor)
    : laser_(laser), cell_size_(cell_size), iou_floor_(iou_floor) {
    laser_.validate();
    if (!(cell_size > 0.0)) throw ConfigError("metrics: cell size must be positive");
    counts_.kill_radius = laser.kill_radius;
    counts_.max_shots_per_target = laser.max_shots_per_target;
    counts_.iou_floor = iou_floor;
}

void MetricsAccumulator::add(const std::string& image_id, std::span<const Prediction> predictions,
                             std::span<const LabeledInstance> truths) {
    const auto m = match(predictions, truths, iou_floor_);
    for (double e : stem_errors(m, predictions, truths)) {
        dist_sum_ += e;
        ++counts_.weed_pairs;
    }
    const auto c = crop_confusion(m, predictions, truths);
    counts_.crops += c.crops;
    counts_.crops_as_weed += c.crops_as_weed;
    auto w = simulate_weeding(predictions, truths, laser_, image_id);
    counts_.weeds += w.weeds;
    counts_.shots += w.shots;
    counts_.kills += w.kills;
    counts_.predictions += static_cast<int>(predictions.size());
    ++counts_.images;
    shots_.insert(shots_.end(), w.log.begin(), w.log.end());
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r = counts_;
    if (r.weed_pairs > 0) {
        r.mean_dist = dist_sum_ / r.weed_pairs;
        r.mean_dist_normalized = *r.mean_dist / cell_size_;
    }
    r.fp_rate = r.crops > 0 ? static_cast<double>(r.crops_as_weed) / r.crops : 0.0;
    r.weeding_accuracy = r.weeds > 0 ? static_cast<double>(r.kills) / r.weeds : 0.0;
    if (r.weeds > 0) r.energy_cost = static_cast<double>(r.shots) / r.weeds;
    return r;
}

MetricsReport evaluate(std::span<const std::vector<Prediction>> predictions,
                       std::span<const data::ImageSample> samples, const LaserModel& laser, double cell_size,
                       double iou_floor, std::vector<Shot>* shot_log) {
    if (predictions.size() != samples.size()) throw ValidationError("evaluate: one prediction list per sample");
    MetricsAccumulator acc(laser, cell_size, iou_floor);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        acc.add(samples[i].id, predictions[i], samples[i].instances);
    }
    if (shot_log) *shot_log = acc.shots();
    return acc.report();
}

std::vector<SweepRow> threshold_sweep(std::span<const detector::RawGridOutput> raws,
                                      std::span<const data::ImageSample> samples,
                                      std::span<const double> thresholds, const detector::DetectorConfig& config,
                                      double iou_floor, double nms_iou) {
    if (raws.size() != samples.size()) throw ValidationError("threshold_sweep: one raw output per sample");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ValidationError("threshold_sweep: thresholds must be ascending");
    }
    std::vector<SweepRow> rows;
    for (double t : thresholds) {
        SweepRow row{t, 0.0, std::nullopt, 0, 0, 0, 0};
        double dist_sum = 0.0;
        for (std::size_t i = 0; i < raws.size(); ++i) {
            const auto preds = detector::decode(raws[i], config, t, nms_iou);
            const auto& truths = samples[i].instances;
            const auto m = match(preds, truths, iou_floor);
            for (double e : stem_errors(m, preds, truths)) {
                dist_sum += e;
                ++row.weed_pairs;
            }
            const auto c = crop_confusion(m, preds, truths);
            row.crops += c.crops;
            row.crops_as_weed += c.crops_as_weed;
            row.predictions += static_cast<int>(preds.size());
        }
        if (row.crops > 0) row.fp_rate = static_cast<double>(row.crops_as_weed) / row.crops;
        if (row.weed_pairs > 0) row.dist = dist_sum / row.weed_pairs;
        rows.push_back(row);
    }
    return rows;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

std::string metrics_to_json(const MetricsReport& r) {
    json j = {{"mean_dist", opt(r.mean_dist)},
              {"mean_dist_normalized", opt(r.mean_dist_normalized)},
              {"fp_rate", r.fp_rate},
              {"weeding_accuracy", r.weeding_accuracy},
              {"energy_cost", opt(r.energy_cost)},
              {"energy_cost_defined", r.energy_cost.has_value()},
              {"counts",
               {{"images", r.images},
                {"predictions", r.predictions},
                {"weeds", r.weeds},
                {"crops", r.crops},
                {"crops_as_weed", r.crops_as_weed},
                {"weed_pairs", r.weed_pairs},
                {"shots", r.shots},
                {"kills", r.kills}}},
              {"laser", {{"kill_radius", r.kill_radius}, {"max_shots_per_target", r.max_shots_per_target}}},
              {"iou_floor", r.iou_floor}};
    return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        MetricsReport r;
        r.mean_dist = read_opt(j, "mean_dist");
        r.mean_dist_normalized = read_opt(j, "mean_dist_normalized");
        r.fp_rate = j.at("fp_rate").get<double>();
        r.weeding_accuracy = j.at("weeding_accuracy").get<double>();
        r.energy_cost = read_opt(j, "energy_cost");
        const auto& c = j.at("counts");
        r.images = c.at("images").get<int>();
        r.predictions = c.at("predictions").get<int>();
        r.weeds = c.at("weeds").get<int>();
        r.crops = c.at("crops").get<int>();
        r.crops_as_weed = c.at("crops_as_weed").get<int>();
        r.weed_pairs = c.at("weed_pairs").get<int>();
        r.shots = c.at("shots").get<int>();
        r.kills = c.at("kills").get<int>();
        r.kill_radius = j.at("laser").at("kill_radius").get<double>();
        r.max_shots_per_target = j.at("laser").at("max_shots_per_target").get<int>();
        r.iou_floor = j.at("iou_floor").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("metrics: ") + e.what());
    }
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "threshold,fp_rate,dist,predictions,crops,crops_as_weed,weed_pairs\n";
    for (const auto& r : rows) {
        out << r.threshold << ',' << r.fp_rate << ',';
        if (r.dist) out << *r.dist;
        out << ',' << r.predictions << ',' << r.crops << ',' << r.crops_as_weed << ',' << r.weed_pairs << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_shot_log(const std::filesystem::path& path, std::span<const Shot> shots) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(10);
    for (const auto& s : shots) {
        out << (s.image_id.empty() ? "-" : s.image_id) << ' ' << s.point.x << ' ' << s.point.y << ' '
            << (s.hit ? "hit" : "miss") << ' ' << s.target << (s.crop_risk ? " crop_risk" : "") << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace wsd::eval
