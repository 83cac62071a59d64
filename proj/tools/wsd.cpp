// wsd: dataset generation, training, pseudo-labeling and evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wsd/data/annotations.hpp"
#include "wsd/data/augment.hpp"
#include "wsd/data/synth.hpp"
#include "wsd/detector/checkpoint.hpp"
#include "wsd/errors.hpp"
#include "wsd/eval/metrics.hpp"
#include "wsd/experiment/runner.hpp"
#include "wsd/ssl/ssl.hpp"

namespace fs = std::filesystem;
using namespace wsd;

namespace {

std::string output_root() {
    const char* root = std::getenv("WSD_OUTPUT_ROOT");
    return root && *root ? root : "runs";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<data::ImageSample> load_dir(const std::string& dir, int size) {
    auto samples = data::load_annotations(dir);
    if (samples.empty()) throw DataError(dir + ": no images");
    for (auto& s : samples) s = data::resize_sample(s, size);
    return samples;
}

std::vector<data::ImageSample> labeled_only(const std::vector<data::ImageSample>& all) {
    std::vector<data::ImageSample> out;
    for (const auto& s : all) {
        if (s.labeled) out.push_back(s);
    }
    if (out.empty()) throw DataError("no labeled images");
    return out;
}

void print_metrics(const eval::MetricsReport& m, const char* label) {
    std::cout << label << ": dist=" << (m.mean_dist ? std::to_string(*m.mean_dist) : "n/a")
              << " fp=" << m.fp_rate << " accuracy=" << m.weeding_accuracy
              << " cost=" << (m.energy_cost ? std::to_string(*m.energy_cost) : "undefined") << " (weeds "
              << m.weeds << ", pairs " << m.weed_pairs << ", shots " << m.shots << ", kills " << m.kills << ")\n";
}

struct ModelArgs {
    std::string checkpoint;
    std::string data;
    std::string mode = "detection_plus_regression";
};

void add_model_args(CLI::App* cmd, ModelArgs& a) {
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", a.data, "Annotation directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--mode", a.mode, "Inference mode")
        ->check(CLI::IsMember({"regression_only", "detection_plus_regression", "ssl"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weed stem detection toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated dataset");
    std::string synth_out;
    int synth_count = 20;
    int synth_unlabeled = 0;
    data::SyntheticSceneSpec scene;
    synth->add_option("--out", synth_out, "Output directory (default $WSD_OUTPUT_ROOT/synth)");
    synth->add_option("--count", synth_count, "Number of scenes")->check(CLI::PositiveNumber);
    synth->add_option("--unlabeled", synth_unlabeled, "Scenes written without annotations")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", scene.seed, "Seed of the first scene");
    synth->add_option("--size", scene.image_size, "Image side in pixels");
    synth->add_option("--crops", scene.crop_count, "Crops per scene");
    synth->add_option("--weeds", scene.weed_count, "Weeds per scene");
    synth->add_option("--stem-offset-mean", scene.stem_offset.mean, "Mean stem offset, fraction of box size");
    synth->add_option("--stem-offset-spread", scene.stem_offset.spread, "Stem offset standard deviation");
    synth->add_option("--clutter", scene.clutter_level, "Background clutter in [0, 1]");

    // anchors
    auto* anchors = app.add_subcommand("anchors", "Cluster box sizes into anchor priors");
    std::string anchors_data;
    int anchors_k = 2;
    std::uint64_t anchors_seed = 0;
    anchors->add_option("--data", anchors_data, "Annotation directory")->required()->check(CLI::ExistingDirectory);
    anchors->add_option("-k", anchors_k, "Number of anchors")->check(CLI::PositiveNumber);
    anchors->add_option("--seed", anchors_seed, "Seed");

    // train
    auto* trn = app.add_subcommand("train", "Run an experiment and write its report");
    std::string train_config, train_preset, train_out, train_dump;
    std::uint64_t train_seed = 0;
    int train_epochs = 0;
    trn->add_option("--config", train_config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    trn->add_option("--preset", train_preset, "Desk preset mode when no config is given")
        ->check(CLI::IsMember({"regression_only", "detection_plus_regression", "ssl"}));
    trn->add_option("--seed", train_seed, "Preset seed");
    trn->add_option("--epochs", train_epochs, "Override the epoch count");
    trn->add_option("--out", train_out, "Output directory (default $WSD_OUTPUT_ROOT/<mode>_<seed>)");
    trn->add_option("--write-config", train_dump, "Write the full config to this file and exit");

    // pseudo-label
    auto* pseudo = app.add_subcommand("pseudo-label", "Gate teacher predictions on unlabeled images");
    ModelArgs pseudo_model;
    std::string pseudo_out;
    ssl::SSLConfig pseudo_cfg;
    std::string routing = "paper";
    std::uint64_t pseudo_seed = 0;
    bool skip_bank = false;
    add_model_args(pseudo, pseudo_model);
    pseudo->add_option("--out", pseudo_out, "Pseudo-label cache (JSON lines)")->required();
    pseudo->add_option("--tau", pseudo_cfg.tau, "Confidence threshold");
    pseudo->add_option("--xi", pseudo_cfg.xi, "Similarity threshold");
    pseudo->add_option("--routing", routing, "Augmentation routing")->check(CLI::IsMember({"paper", "conventional"}));
    pseudo->add_option("--seed", pseudo_seed, "Augmentation seed");
    pseudo->add_flag("--skip-empty-bank", skip_bank, "Skip the similarity gate when no labeled weeds exist");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on labeled images");
    ModelArgs eval_model;
    double eval_threshold = 0.15, eval_iou = eval::kDefaultIouFloor, eval_radius = 0.0;
    int eval_shots = 1;
    bool eval_baseline = false;
    std::string eval_out;
    add_model_args(ev, eval_model);
    ev->add_option("--threshold", eval_threshold, "Decode confidence threshold");
    ev->add_option("--iou-floor", eval_iou, "Matching IoU floor");
    ev->add_option("--kill-radius", eval_radius, "Laser kill radius (default from data)");
    ev->add_option("--max-shots", eval_shots, "Shots per target");
    ev->add_flag("--baseline", eval_baseline, "Use box centers as stems");
    ev->add_option("--out", eval_out, "Write metrics JSON here");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "FP rate and Dist across decode thresholds");
    ModelArgs sweep_model;
    std::vector<double> sweep_thresholds{0.05, 0.055, 0.056, 0.15};
    std::string sweep_out;
    add_model_args(sweep, sweep_model);
    sweep->add_option("--thresholds", sweep_thresholds, "Ascending thresholds")->delimiter(',');
    sweep->add_option("--out", sweep_out, "CSV output");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Laser weeding simulation");
    ModelArgs sim_model;
    double sim_threshold = 0.15, sim_radius = 0.0;
    int sim_shots = 1;
    bool sim_baseline = false;
    std::string sim_log;
    add_model_args(sim, sim_model);
    sim->add_option("--threshold", sim_threshold, "Decode confidence threshold");
    sim->add_option("--kill-radius", sim_radius, "Kill radius in pixels (default from data)");
    sim->add_option("--max-shots", sim_shots, "Shots per target");
    sim->add_flag("--baseline", sim_baseline, "Aim at box centers");
    sim->add_option("--log", sim_log, "Shot log output");

    // report
    auto* rep = app.add_subcommand("report", "Summarize a run directory");
    std::string report_dir;
    rep->add_option("run", report_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            if (synth_out.empty()) synth_out = (fs::path(output_root()) / "synth").string();
            std::vector<data::ImageSample> samples;
            for (int i = 0; i < synth_count; ++i) {
                auto spec = scene;
                spec.seed = scene.seed + static_cast<std::uint64_t>(i);
                auto s = data::generate_scene(spec);
                if (i >= synth_count - synth_unlabeled) {
                    s.labeled = false;
                    s.instances.clear();
                }
                samples.push_back(std::move(s));
            }
            data::save_annotations(samples, synth_out);
            std::cout << "wrote " << samples.size() << " scenes to " << synth_out << "\n";
        } else if (anchors->parsed()) {
            const auto samples = labeled_only(data::load_annotations(anchors_data));
            nlohmann::json out = nlohmann::json::array();
            for (const auto& a : experiment::compute_anchors(samples, anchors_k, anchors_seed)) {
                out.push_back({a.width, a.height});
            }
            std::cout << out.dump() << "\n";
        } else if (trn->parsed()) {
            experiment::ExperimentConfig cfg;
            std::string text;
            if (!train_config.empty()) {
                text = read_file(train_config);
                cfg = experiment::experiment_config_from_json(text);
            } else {
                cfg = experiment::desk_preset(
                    experiment::parse_mode(train_preset.empty() ? "detection_plus_regression" : train_preset),
                    train_seed);
            }
            if (train_epochs > 0) {
                cfg.epochs = train_epochs;
                text.clear();
            }
            // The destination does not change the run, so the input text is still echoed.
            if (!train_out.empty()) {
                cfg.output_dir = train_out;
            } else if (cfg.output_dir.empty()) {
                cfg.output_dir = (fs::path(output_root()) /
                                  (experiment::mode_name(cfg.mode) + "_" + std::to_string(cfg.seed)))
                                     .string();
            }
            cfg.validate();
            if (!train_dump.empty()) {
                std::ofstream(train_dump) << experiment::to_json(cfg);
                return 0;
            }
            const auto record = experiment::run_experiment(cfg, text, [](const std::string& line) {
                std::cerr << line << "\n";
            });
            experiment::emit_report(record, cfg.output_dir);
            print_metrics(record.metrics, "test");
            print_metrics(record.baseline_metrics, "bbox-center baseline");
            if (record.ssl) print_metrics(record.ssl->teacher_metrics, "supervised teacher");
            std::cout << "report: " << cfg.output_dir << "\n";
        } else if (pseudo->parsed() || ev->parsed() || sweep->parsed() || sim->parsed()) {
            const ModelArgs& m = pseudo->parsed() ? pseudo_model
                                 : ev->parsed()   ? eval_model
                                 : sweep->parsed() ? sweep_model
                                                   : sim_model;
            const auto ckpt = detector::load_checkpoint(m.checkpoint);
            const detector::Network net(ckpt.config);
            const auto all = load_dir(m.data, ckpt.config.input_size);
            const auto mode = experiment::parse_mode(m.mode);

            if (pseudo->parsed()) {
                pseudo_cfg.routing = routing == "paper" ? ssl::AugmentationRouting::paper
                                                        : ssl::AugmentationRouting::conventional;
                pseudo_cfg.require_bank = !skip_bank;
                std::vector<data::ImageSample> labeled, unlabeled;
                for (const auto& s : all) (s.labeled ? labeled : unlabeled).push_back(s);
                const auto bank = ssl::build_weed_bank(net, ckpt.params, labeled, pseudo_cfg.bank_capacity);
                const auto labels =
                    ssl::generate_pseudo_labels(net, ckpt.params, unlabeled, bank, pseudo_cfg, pseudo_seed);
                ssl::write_pseudo_label_cache(pseudo_out, labels);
                std::cout << ssl::count_labels(labels) << " pseudo labels on " << unlabeled.size()
                          << " images (bank " << bank.size() << ")\n";
                return 0;
            }
            const auto samples = labeled_only(all);
            if (sweep->parsed()) {
                std::vector<detector::RawGridOutput> raws;
                for (const auto& s : samples) raws.push_back(net.forward(detector::normalize(s.image), ckpt.params));
                const auto rows = eval::threshold_sweep(raws, samples, sweep_thresholds, ckpt.config);
                if (!sweep_out.empty()) eval::write_sweep_csv(sweep_out, rows);
                std::cout << "threshold fp_rate dist predictions\n";
                for (const auto& r : rows) {
                    std::cout << r.threshold << ' ' << r.fp_rate << ' ' << (r.dist ? std::to_string(*r.dist) : "n/a")
                              << ' ' << r.predictions << "\n";
                }
                return 0;
            }
            const bool is_eval = ev->parsed();
            auto preds = experiment::predict(net, ckpt.params, samples, mode, is_eval ? eval_threshold : sim_threshold);
            if (is_eval ? eval_baseline : sim_baseline) {
                for (auto& p : preds) p = eval::bbox_center_baseline(std::move(p));
            }
            eval::LaserModel laser;
            const double radius = is_eval ? eval_radius : sim_radius;
            laser.kill_radius = radius > 0.0 ? radius : eval::default_kill_radius(samples);
            laser.max_shots_per_target = is_eval ? eval_shots : sim_shots;
            std::vector<eval::Shot> shots;
            const auto report = eval::evaluate(preds, samples, laser, ckpt.config.cell_size(),
                                               is_eval ? eval_iou : eval::kDefaultIouFloor, &shots);
            if (is_eval) {
                if (!eval_out.empty()) std::ofstream(eval_out) << eval::metrics_to_json(report) << "\n";
                print_metrics(report, "eval");
            } else {
                if (!sim_log.empty()) eval::write_shot_log(sim_log, shots);
                std::cout << "accuracy=" << report.weeding_accuracy << " cost="
                          << (report.energy_cost ? std::to_string(*report.energy_cost) : "undefined")
                          << " shots=" << report.shots << " kills=" << report.kills << " weeds=" << report.weeds
                          << " kill_radius=" << laser.kill_radius << "\n";
            }
        } else if (rep->parsed()) {
            const auto file = (fs::path(report_dir) / "metrics.json").string();
            const auto j = nlohmann::json::parse(read_file(file));
            std::cout << "mode: " << j.at("mode").get<std::string>() << "\n";
            print_metrics(experiment::read_report_metrics(file), "test");
            print_metrics(eval::metrics_from_json(j.at("bbox_center_baseline").dump()), "bbox-center baseline");
            if (j.contains("ssl")) {
                print_metrics(eval::metrics_from_json(j["ssl"].at("teacher_test").dump()), "supervised teacher");
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
