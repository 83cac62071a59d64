#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wsd/data/sample.hpp"
#include "wsd/detector/decode.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/losses/losses.hpp"
#include "wsd/train/trainer.hpp"

namespace wsd::ssl {

/// Which pathway sees which augmentation. `paper`: teacher strong, student
/// weak. `conventional`: teacher weak, student strong.
enum class AugmentationRouting { paper, conventional };

struct SSLConfig {
    double tau = 0.5;           ///< confidence gate; a label passes when conf_score > tau
    double xi = 0.4;            ///< similarity gate for weed labels
    double ema_momentum = 0.9;
    double unlabeled_batch_ratio = 0.5;
    std::size_t bank_capacity = 4096;
    AugmentationRouting routing = AugmentationRouting::paper;
    /// With an empty bank: true raises GatingError, false skips the
    /// similarity gate.
    bool require_bank = true;
    double nms_iou = detector::kDefaultNmsIou;

    void validate() const;
};

/// Maximum softmax probability of a logit vector.
double conf_score(std::span<const double> class_logits);

struct BankEntry {
    std::string source;  ///< "<image id>#<instance index>"
    std::vector<double> embedding;
};

/// Ground-truth weed embeddings. Overflow beyond capacity is handled by
/// reservoir sampling, so every offered vector is kept with equal probability.
class WeedBank {
public:
    explicit WeedBank(std::size_t capacity = 4096, std::uint64_t seed = 0);

    void add(std::string source, std::vector<double> embedding);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t offered() const { return offered_; }
    int dim() const { return dim_; }
    const std::vector<BankEntry>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::size_t offered_ = 0;
    int dim_ = -1;
    std::vector<BankEntry> entries_;
    std::mt19937_64 rng_;
};

/// Highest cosine similarity between the candidate and any bank vector.
double sim_score(std::span<const double> candidate, const WeedBank& bank);

/// Embeddings pooled at every ground-truth weed box of the labeled samples,
/// as seen by the given parameters.
WeedBank build_weed_bank(const detector::Network& network, std::span<const double> params,
                         std::span<const data::ImageSample> labeled, std::size_t capacity, std::uint64_t seed = 0);

struct PseudoLabel {
    detector::Prediction prediction;  ///< in the original image frame
    double conf_score = 0.0;
    std::optional<double> sim_score;  ///< unset for crops, or when the gate was skipped
    std::string image_id;
    std::string recipe_id;
};

struct PseudoLabeledImage {
    data::ImageSample sample;  ///< the unlabeled input, untouched
    std::vector<PseudoLabel> labels;
};

/// Decodes each unlabeled image through the teacher under the routed
/// augmentation and keeps predictions that clear both gates, mapped back to
/// the original frame.
std::vector<PseudoLabeledImage> generate_pseudo_labels(const detector::Network& network,
                                                       std::span<const double> teacher,
                                                       std::span<const data::ImageSample> unlabeled,
                                                       const WeedBank& bank, const SSLConfig& config,
                                                       std::uint64_t seed);

/// Training sample whose instances are the pseudo labels.
data::ImageSample to_training_sample(const PseudoLabeledImage& image);

std::size_t count_labels(std::span<const PseudoLabeledImage> images);

/// teacher <- m * teacher + (1 - m) * student, in place.
void ema_update(std::span<double> teacher, std::span<const double> student, double momentum);

struct StudentResult {
    std::vector<double> student;
    std::vector<double> teacher;
    std::vector<losses::LossBreakdown> history;
};

/// Trains the student on mixed labeled / pseudo-labeled batches, applying the
/// EMA teacher update after every step.
StudentResult train_student(const detector::Network& network, std::span<const data::ImageSample> labeled,
                            std::span<const data::ImageSample> pseudo, std::vector<double> student,
                            std::vector<double> teacher, const SSLConfig& config,
                            const train::TrainOptions& options, int steps);

/// One JSON record per line: image id, class, box, stem, conf, sim, recipe.
void write_pseudo_label_cache(const std::filesystem::path& path, std::span<const PseudoLabeledImage> images);

/// Restores labels (without embeddings or logits) keyed by image id. Images
/// must be supplied by the caller; labels for unknown ids raise DataError.
std::vector<PseudoLabeledImage> read_pseudo_label_cache(const std::filesystem::path& path,
                                                        std::span<const data::ImageSample> unlabeled);

}  // namespace wsd::ssl
