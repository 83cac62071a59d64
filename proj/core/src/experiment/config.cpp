#include "wsd/experiment/config.hpp"

#include <cmath>

#include "json_io.hpp"
#include "wsd/errors.hpp"

namespace wsd::experiment {

using nlohmann::json;

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::regression_only: return "regression_only";
        case Mode::detection_plus_regression: return "detection_plus_regression";
        case Mode::ssl: return "ssl";
    }
    return "?";
}

Mode parse_mode(const std::string& name) {
    if (name == "regression_only") return Mode::regression_only;
    if (name == "detection_plus_regression") return Mode::detection_plus_regression;
    if (name == "ssl") return Mode::ssl;
    throw ConfigError("unknown mode '" + name + "'");
}

void ExperimentConfig::validate() const {
    const double sum = splits.train + splits.val + splits.test;
    if (splits.train <= 0.0 || splits.val < 0.0 || splits.test <= 0.0 || std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative, with train and test positive, and sum to 1");
    }
    detector.validate();
    weights.validate();
    ssl.validate();
    optimizer.validate();
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw ConfigError("labeled_fraction must lie in (0, 1]");
    if (ssl_rounds < 1) throw ConfigError("ssl_rounds must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(eval_threshold > 0.0 && eval_threshold < 1.0)) throw ConfigError("eval_threshold must lie in (0, 1)");
    if (!(iou_floor >= 0.0 && iou_floor <= 1.0)) throw ConfigError("iou_floor must lie in [0, 1]");
    if (kill_radius && !(*kill_radius > 0.0)) throw ConfigError("kill_radius must be positive");
    if (max_shots_per_target < 1) throw ConfigError("max_shots_per_target must be >= 1");
    if (dataset.synthetic) {
        const auto& s = *dataset.synthetic;
        if (s.count < 3) throw ConfigError("synthetic dataset needs at least 3 scenes");
        if (s.min_crops < 0 || s.max_crops < s.min_crops || s.min_weeds < 0 || s.max_weeds < s.min_weeds) {
            throw ConfigError("synthetic dataset: invalid plant count ranges");
        }
        data::validate(s.base);
    } else if (dataset.directory.empty()) {
        throw ConfigError("dataset: set either a synthetic spec or an annotation directory");
    }
}

namespace {

json scene_json(const data::SyntheticSceneSpec& s) {
    return {{"seed", s.seed},
            {"image_size", s.image_size},
            {"crop_count", s.crop_count},
            {"weed_count", s.weed_count},
            {"stem_offset", {{"mean", s.stem_offset.mean}, {"spread", s.stem_offset.spread}}},
            {"clutter_level", s.clutter_level},
            {"min_plant_fraction", s.min_plant_fraction},
            {"max_plant_fraction", s.max_plant_fraction},
            {"crop_class", s.crop_class ? json(std::string(data::class_name(*s.crop_class))) : json(nullptr)}};
}

data::SyntheticSceneSpec scene_from(const json& j) {
    data::SyntheticSceneSpec s;
    s.seed = j.value("seed", s.seed);
    s.image_size = j.value("image_size", s.image_size);
    s.crop_count = j.value("crop_count", s.crop_count);
    s.weed_count = j.value("weed_count", s.weed_count);
    if (j.contains("stem_offset")) {
        s.stem_offset.mean = j["stem_offset"].value("mean", s.stem_offset.mean);
        s.stem_offset.spread = j["stem_offset"].value("spread", s.stem_offset.spread);
    }
    s.clutter_level = j.value("clutter_level", s.clutter_level);
    s.min_plant_fraction = j.value("min_plant_fraction", s.min_plant_fraction);
    s.max_plant_fraction = j.value("max_plant_fraction", s.max_plant_fraction);
    if (j.contains("crop_class") && !j["crop_class"].is_null()) {
        const auto name = j["crop_class"].get<std::string>();
        s.crop_class = data::parse_class(name);
        if (!s.crop_class) throw ConfigError("unknown crop_class '" + name + "'");
    }
    return s;
}

}  // namespace

std::string to_json(const ExperimentConfig& c) {
    json dataset;
    if (c.dataset.synthetic) {
        const auto& s = *c.dataset.synthetic;
        dataset["synthetic"] = {{"count", s.count},         {"scene", scene_json(s.base)},
                                {"min_crops", s.min_crops}, {"max_crops", s.max_crops},
                                {"min_weeds", s.min_weeds}, {"max_weeds", s.max_weeds}};
        dataset["directory"] = nullptr;
    } else {
        dataset["synthetic"] = nullptr;
        dataset["directory"] = c.dataset.directory;
    }
    json detector_json = c.detector;
    const auto& o = c.optimizer;
    json j = {
        {"mode", mode_name(c.mode)},
        {"dataset", dataset},
        {"splits", {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}}},
        {"detector", detector_json},
        {"loss_weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}}},
        {"ssl",
         {{"tau", c.ssl.tau},
          {"xi", c.ssl.xi},
          {"ema_momentum", c.ssl.ema_momentum},
          {"unlabeled_batch_ratio", c.ssl.unlabeled_batch_ratio},
          {"bank_capacity", c.ssl.bank_capacity},
          {"augmentation_routing", c.ssl.routing == ssl::AugmentationRouting::paper ? "paper" : "conventional"},
          {"require_bank", c.ssl.require_bank},
          {"nms_iou", c.ssl.nms_iou}}},
        {"optimizer",
         {{"kind", o.kind == train::OptimizerKind::sgd ? "sgd" : "adam"},
          {"learning_rate", o.learning_rate},
          {"momentum", o.momentum},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"weight_decay", o.weight_decay},
          {"grad_clip_norm", o.grad_clip_norm}}},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"train_augmentation", c.train_augmentation == data::AugmentationKind::weak ? "weak" : "strong"},
        {"labeled_fraction", c.labeled_fraction},
        {"ssl_rounds", c.ssl_rounds},
        {"eval_every", c.eval_every},
        {"eval_threshold", c.eval_threshold},
        {"iou_floor", c.iou_floor},
        {"kill_radius", c.kill_radius ? json(*c.kill_radius) : json(nullptr)},
        {"max_shots_per_target", c.max_shots_per_target},
        {"seed", c.seed},
        {"output_dir", c.output_dir}};
    return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    ExperimentConfig c;
    try {
        const auto j = json::parse(text);
        if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
        c.mode = parse_mode(j.value("mode", mode_name(c.mode)));
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            if (d.contains("synthetic") && !d["synthetic"].is_null()) {
                const auto& s = d["synthetic"];
                SyntheticDataset syn;
                syn.count = s.value("count", syn.count);
                if (s.contains("scene")) syn.base = scene_from(s["scene"]);
                syn.min_crops = s.value("min_crops", syn.min_crops);
                syn.max_crops = s.value("max_crops", syn.max_crops);
                syn.min_weeds = s.value("min_weeds", syn.min_weeds);
                syn.max_weeds = s.value("max_weeds", syn.max_weeds);
                c.dataset.synthetic = syn;
            }
            if (d.contains("directory") && !d["directory"].is_null()) {
                c.dataset.directory = d["directory"].get<std::string>();
            }
        }
        if (j.contains("splits")) {
            c.splits.train = j["splits"].value("train", c.splits.train);
            c.splits.val = j["splits"].value("val", c.splits.val);
            c.splits.test = j["splits"].value("test", c.splits.test);
        }
        if (j.contains("detector")) {
            c.detector = j["detector"].get<detector::DetectorConfig>();
            if (!j["detector"].contains("anchors") || !j["detector"].contains("stages")) {
                const auto d = detector::default_detector_config(c.detector.input_size);
                if (!j["detector"].contains("anchors")) c.detector.anchors = d.anchors;
                if (!j["detector"].contains("stages")) {
                    c.detector.stages = d.stages;
                    if (!j["detector"].contains("grid_size")) c.detector.grid_size = d.grid_size;
                }
            }
        }
        if (j.contains("loss_weights")) {
            const auto& w = j["loss_weights"];
            c.weights = {w.value("alpha", c.weights.alpha), w.value("beta", c.weights.beta),
                         w.value("gamma", c.weights.gamma)};
        }
        if (j.contains("ssl")) {
            const auto& s = j["ssl"];
            c.ssl.tau = s.value("tau", c.ssl.tau);
            c.ssl.xi = s.value("xi", c.ssl.xi);
            c.ssl.ema_momentum = s.value("ema_momentum", c.ssl.ema_momentum);
            c.ssl.unlabeled_batch_ratio = s.value("unlabeled_batch_ratio", c.ssl.unlabeled_batch_ratio);
            c.ssl.bank_capacity = s.value("bank_capacity", c.ssl.bank_capacity);
            const auto routing = s.value("augmentation_routing", std::string("paper"));
            if (routing == "paper") {
                c.ssl.routing = ssl::AugmentationRouting::paper;
            } else if (routing == "conventional") {
                c.ssl.routing = ssl::AugmentationRouting::conventional;
            } else {
                throw ConfigError("unknown augmentation_routing '" + routing + "'");
            }
            c.ssl.require_bank = s.value("require_bank", c.ssl.require_bank);
            c.ssl.nms_iou = s.value("nms_iou", c.ssl.nms_iou);
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            const auto kind = o.value("kind", std::string("sgd"));
            if (kind == "sgd") {
                c.optimizer.kind = train::OptimizerKind::sgd;
            } else if (kind == "adam") {
                c.optimizer.kind = train::OptimizerKind::adam;
            } else {
                throw ConfigError("unknown optimizer kind '" + kind + "'");
            }
            c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
            c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
            c.optimizer.grad_clip_norm = o.value("grad_clip_norm", c.optimizer.grad_clip_norm);
        }
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        const auto aug = j.value("train_augmentation", std::string("weak"));
        if (aug == "weak") {
            c.train_augmentation = data::AugmentationKind::weak;
        } else if (aug == "strong") {
            c.train_augmentation = data::AugmentationKind::strong;
        } else {
            throw ConfigError("unknown train_augmentation '" + aug + "'");
        }
        c.labeled_fraction = j.value("labeled_fraction", c.labeled_fraction);
        c.ssl_rounds = j.value("ssl_rounds", c.ssl_rounds);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.eval_threshold = j.value("eval_threshold", c.eval_threshold);
        c.iou_floor = j.value("iou_floor", c.iou_floor);
        if (j.contains("kill_radius") && !j["kill_radius"].is_null()) c.kill_radius = j["kill_radius"].get<double>();
        c.max_shots_per_target = j.value("max_shots_per_target", c.max_shots_per_target);
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("experiment config: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig desk_preset(Mode mode, std::uint64_t seed) {
    ExperimentConfig c;
    c.mode = mode;
    SyntheticDataset syn;
    syn.count = 360;
    syn.base.seed = seed * 100000;
    c.dataset.synthetic = syn;
    c.optimizer.kind = train::OptimizerKind::adam;
    c.train_augmentation = data::AugmentationKind::strong;
    c.epochs = 50;
    c.eval_every = 5;
    c.ssl_rounds = 10;
    c.seed = seed;
    return c;
}

}  // namespace wsd::experiment
