#include "wsd/ssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "wsd/data/augment.hpp"
#include "wsd/errors.hpp"

namespace wsd::ssl {

using nlohmann::json;

void SSLConfig::validate() const {
    // tau = 1 is accepted as "gate closed": the strict comparison then admits nothing.
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("ssl: tau must lie in (0, 1]");
    if (!(xi > -1.0 && xi < 1.0)) throw ConfigError("ssl: xi must lie in (-1, 1)");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ConfigError("ssl: ema_momentum must lie in [0, 1)");
    if (!(unlabeled_batch_ratio >= 0.0 && unlabeled_batch_ratio < 1.0)) {
        throw ConfigError("ssl: unlabeled_batch_ratio must lie in [0, 1)");
    }
    if (bank_capacity == 0) throw ConfigError("ssl: bank capacity must be positive");
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("ssl: nms_iou must lie in (0, 1]");
}

double conf_score(std::span<const double> class_logits) {
    if (class_logits.empty()) throw ValidationError("conf_score: empty logits");
    const double top = *std::max_element(class_logits.begin(), class_logits.end());
    double sum = 0.0;
    for (double z : class_logits) {
        if (!std::isfinite(z)) throw ValidationError("conf_score: non-finite logit");
        sum += std::exp(z - top);
    }
    return 1.0 / sum;
}

namespace {

double norm(std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

bool usable(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }) && norm(v) > 0.0;
}

}  // namespace

WeedBank::WeedBank(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("weed bank: capacity must be positive");
}

void WeedBank::add(std::string source, std::vector<double> embedding) {
    if (!usable(embedding)) throw ValidationError("weed bank: embedding must be finite and non-zero");
    if (dim_ < 0) dim_ = static_cast<int>(embedding.size());
    if (static_cast<int>(embedding.size()) != dim_) throw ValidationError("weed bank: embedding size mismatch");
    ++offered_;
    if (entries_.size() < capacity_) {
        entries_.push_back({std::move(source), std::move(embedding)});
        return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, offered_ - 1);
    const std::size_t j = pick(rng_);
    if (j < capacity_) entries_[j] = {std::move(source), std::move(embedding)};
}

double sim_score(std::span<const double> candidate, const WeedBank& bank) {
    if (bank.empty()) {
        throw GatingError("sim_score: weed bank is empty; skip the similarity gate or supply labeled weeds");
    }
    if (static_cast<int>(candidate.size()) != bank.dim()) throw ValidationError("sim_score: dimension mismatch");
    const double cn = norm(candidate);
    if (!(cn > 0.0) || !std::isfinite(cn)) throw ValidationError("sim_score: candidate must be finite and non-zero");
    double best = -1.0;
    for (const auto& e : bank.entries()) {
        const double dot = std::inner_product(candidate.begin(), candidate.end(), e.embedding.begin(), 0.0);
        best = std::max(best, dot / (cn * norm(e.embedding)));
    }
    return std::clamp(best, -1.0, 1.0);
}

WeedBank build_weed_bank(const detector::Network& network, std::span<const double> params,
                         std::span<const data::ImageSample> labeled, std::size_t capacity, std::uint64_t seed) {
    WeedBank bank(capacity, seed);
    for (const auto& sample : labeled) {
        if (!sample.labeled) continue;
        const auto raw = network.forward(detector::normalize(sample.image), params);
        int index = 0;
        for (const auto& inst : sample.instances) {
            if (inst.is_weed()) {
                auto emb = detector::pool_embedding(raw, inst.bbox, network.config());
                if (usable(emb)) bank.add(sample.id + "#" + std::to_string(index), std::move(emb));
            }
            ++index;
        }
    }
    return bank;
}

std::vector<PseudoLabeledImage> generate_pseudo_labels(const detector::Network& network,
                                                       std::span<const double> teacher,
                                                       std::span<const data::ImageSample> unlabeled,
                                                       const WeedBank& bank, const SSLConfig& config,
                                                       std::uint64_t seed) {
    config.validate();
    const auto& det = network.config();
    const bool gate_similarity = !bank.empty();
    if (!gate_similarity && config.require_bank) {
        throw GatingError("pseudo labels: weed bank is empty and the similarity gate is required");
    }
    const auto kind = config.routing == AugmentationRouting::paper ? data::AugmentationKind::strong
                                                                   : data::AugmentationKind::weak;
    std::mt19937_64 rng(seed);
    std::vector<PseudoLabeledImage> out;
    out.reserve(unlabeled.size());
    for (const auto& sample : unlabeled) {
        if (sample.image.width != det.input_size || sample.image.height != det.input_size) {
            throw ValidationError(sample.id + ": image size does not match the detector input");
        }
        const auto recipe = data::sample_recipe(kind, sample.image.width, sample.image.height, rng);
        data::ImageSample view = sample;
        view.instances.clear();
        view.labeled = false;
        const auto [augmented, map] = data::apply_augmentation(view, recipe);
        const auto raw = network.forward(detector::normalize(augmented.image), teacher);

        PseudoLabeledImage result{sample, {}};
        const double w = sample.image.width;
        const double h = sample.image.height;
        for (auto& pred : detector::decode(raw, det, config.tau, config.nms_iou)) {
            const double conf = conf_score(pred.class_logits);
            if (!(conf > config.tau)) continue;
            std::optional<double> sim;
            if (pred.class_id == data::ClassId::weed && gate_similarity) {
                if (!usable(pred.embedding)) continue;
                sim = sim_score(pred.embedding, bank);
                if (!(*sim > config.xi)) continue;
            }
            const Box box = clamp_box(map.to_original(pred.bbox), w, h);
            if (box.width() < 1.0 || box.height() < 1.0) continue;
            pred.bbox = box;
            if (pred.stem) pred.stem = clamp_point(map.to_original(*pred.stem), box);
            result.labels.push_back({std::move(pred), conf, sim, sample.id, recipe.id()});
        }
        out.push_back(std::move(result));
    }
    return out;
}

data::ImageSample to_training_sample(const PseudoLabeledImage& image) {
    data::ImageSample s = image.sample;
    s.labeled = true;
    s.instances.clear();
    for (const auto& label : image.labels) {
        data::LabeledInstance inst;
        inst.class_id = label.prediction.class_id;
        inst.bbox = label.prediction.bbox;
        if (inst.is_weed()) {
            inst.stem = clamp_point(label.prediction.stem.value_or(inst.bbox.center()), inst.bbox);
        }
        s.instances.push_back(inst);
    }
    return s;
}

std::size_t count_labels(std::span<const PseudoLabeledImage> images) {
    std::size_t n = 0;
    for (const auto& im : images) n += im.labels.size();
    return n;
}

void ema_update(std::span<double> teacher, std::span<const double> student, double momentum) {
    if (teacher.size() != student.size()) {
        throw ConfigError("ema_update: teacher has " + std::to_string(teacher.size()) + " parameters, student has " +
                          std::to_string(student.size()));
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("ema_update: momentum must lie in [0, 1)");
    const double k = 1.0 - momentum;
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        teacher[i] = momentum * teacher[i] + k * student[i];
    }
}

StudentResult train_student(const detector::Network& network, std::span<const data::ImageSample> labeled,
                            std::span<const data::ImageSample> pseudo, std::vector<double> student,
                            std::vector<double> teacher, const SSLConfig& config,
                            const train::TrainOptions& options, int steps) {
    config.validate();
    if (steps < 1) throw ConfigError("train_student: steps must be >= 1");
    if (labeled.empty()) throw DataError("train_student: the labeled set is empty");
    if (student.size() != teacher.size()) throw ConfigError("train_student: teacher and student shapes differ");

    auto opts = options;
    opts.pseudo_augmentation = config.routing == AugmentationRouting::paper ? data::AugmentationKind::weak
                                                                            : data::AugmentationKind::strong;
    train::Trainer trainer(network, opts, labeled, pseudo, config.unlabeled_batch_ratio);
    StudentResult result{std::move(student), std::move(teacher), {}};
    result.history.reserve(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        result.history.push_back(trainer.step(result.student));
        ema_update(result.teacher, result.student, config.ema_momentum);
    }
    return result;
}

void write_pseudo_label_cache(const std::filesystem::path& path, std::span<const PseudoLabeledImage> images) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& im : images) {
        for (const auto& l : im.labels) {
            const auto& p = l.prediction;
            json rec = {{"image_id", l.image_id},
                        {"class", std::string(data::class_name(p.class_id))},
                        {"box", {p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max}},
                        {"confidence", p.confidence},
                        {"conf", l.conf_score},
                        {"recipe", l.recipe_id}};
            rec["stem"] = p.stem ? json{p.stem->x, p.stem->y} : json(nullptr);
            rec["sim"] = l.sim_score ? json(*l.sim_score) : json(nullptr);
            out << rec.dump() << '\n';
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<PseudoLabeledImage> read_pseudo_label_cache(const std::filesystem::path& path,
                                                        std::span<const data::ImageSample> unlabeled) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<PseudoLabeledImage> out;
    std::map<std::string, std::size_t> slot;
    for (const auto& s : unlabeled) {
        slot[s.id] = out.size();
        out.push_back({s, {}});
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        try {
            const auto rec = json::parse(line);
            const auto id = rec.at("image_id").get<std::string>();
            const auto it = slot.find(id);
            if (it == slot.end()) throw DataError(where + ": unknown image id " + id);
            PseudoLabel l;
            l.image_id = id;
            const auto cls = data::parse_class(rec.at("class").get<std::string>());
            if (!cls) throw ParseError(where + ": unknown class");
            l.prediction.class_id = *cls;
            const auto b = rec.at("box").get<std::vector<double>>();
            if (b.size() != 4) throw ParseError(where + ": box needs 4 numbers");
            l.prediction.bbox = {b[0], b[1], b[2], b[3]};
            l.prediction.confidence = rec.at("confidence").get<double>();
            if (!rec.at("stem").is_null()) {
                const auto p = rec["stem"].get<std::vector<double>>();
                if (p.size() != 2) throw ParseError(where + ": stem needs 2 numbers");
                l.prediction.stem = Point{p[0], p[1]};
            }
            l.conf_score = rec.at("conf").get<double>();
            if (!rec.at("sim").is_null()) l.sim_score = rec["sim"].get<double>();
            l.recipe_id = rec.at("recipe").get<std::string>();
            out[it->second].labels.push_back(std::move(l));
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return out;
}

}  // namespace wsd::ssl
