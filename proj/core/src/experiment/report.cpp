#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wsd/errors.hpp"
#include "wsd/experiment/runner.hpp"

namespace wsd::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json loss_json(const losses::LossBreakdown& l) {
    return {{"l_cls", l.l_cls}, {"l_bbox", l.l_bbox}, {"l_reg", l.l_reg}, {"total", l.total}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void put(data::Image& img, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const auto i = (static_cast<std::size_t>(y) * img.width + x) * 3;
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
}

void outline(data::Image& img, const Box& b, std::uint8_t r, std::uint8_t g, std::uint8_t bl) {
    const int x0 = static_cast<int>(std::lround(b.x_min)), x1 = static_cast<int>(std::lround(b.x_max)) - 1;
    const int y0 = static_cast<int>(std::lround(b.y_min)), y1 = static_cast<int>(std::lround(b.y_max)) - 1;
    for (int x = x0; x <= x1; ++x) {
        put(img, x, y0, r, g, bl);
        put(img, x, y1, r, g, bl);
    }
    for (int y = y0; y <= y1; ++y) {
        put(img, x0, y, r, g, bl);
        put(img, x1, y, r, g, bl);
    }
}

void dot(data::Image& img, const Point& p, int radius, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int cx = static_cast<int>(std::floor(p.x)), cy = static_cast<int>(std::floor(p.y));
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) put(img, cx + dx, cy + dy, r, g, b);
        }
    }
}

}  // namespace

std::vector<StemMarker> overlay_markers(const OverlayItem& item) {
    std::vector<StemMarker> out;
    for (const auto& t : item.sample.instances) {
        if (t.is_weed() && t.stem) out.push_back({*t.stem, false});
    }
    for (const auto& p : item.predictions) {
        if (p.class_id == data::ClassId::weed && p.stem) out.push_back({*p.stem, true});
    }
    return out;
}

data::Image render_overlay(const OverlayItem& item) {
    data::Image img = item.sample.image;
    for (const auto& t : item.sample.instances) outline(img, t.bbox, 200, 40, 40);
    for (const auto& p : item.predictions) outline(img, p.bbox, 40, 200, 40);
    for (const auto& m : overlay_markers(item)) {
        if (m.predicted) {
            dot(img, m.point, 2, 0, 255, 0);
        } else {
            dot(img, m.point, 2, 255, 0, 0);
        }
    }
    return img;
}

std::string loss_curve_svg(std::span<const losses::LossBreakdown> steps) {
    constexpr double W = 640, H = 360, L = 50, R = 130, T = 20, B = 40;
    const std::size_t stride = std::max<std::size_t>(1, steps.size() / 800);
    double top = 1e-12;
    for (const auto& s : steps) top = std::max({top, s.total, s.l_cls, s.l_bbox, s.l_reg});
    const double n = std::max<double>(1.0, static_cast<double>(steps.size()) - 1.0);
    auto line = [&](auto field) {
        std::ostringstream pts;
        for (std::size_t i = 0; i < steps.size(); i += stride) {
            const double x = L + (W - L - R) * static_cast<double>(i) / n;
            const double y = T + (H - T - B) * (1.0 - std::min(1.0, field(steps[i]) / top));
            pts << x << ',' << y << ' ';
        }
        return pts.str();
    };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"12\">step 0</text>\n"
        << "<text x=\"" << W - R - 60 << "\" y=\"" << H - 10 << "\" font-size=\"12\">step " << steps.size()
        << "</text>\n"
        << "<text x=\"4\" y=\"" << T + 10 << "\" font-size=\"12\">" << top << "</text>\n";
    const struct {
        const char* name;
        const char* color;
        double (*get)(const losses::LossBreakdown&);
    } series[] = {
        {"total", "black", [](const losses::LossBreakdown& l) { return l.total; }},
        {"l_cls", "steelblue", [](const losses::LossBreakdown& l) { return l.l_cls; }},
        {"l_bbox", "darkorange", [](const losses::LossBreakdown& l) { return l.l_bbox; }},
        {"l_reg", "seagreen", [](const losses::LossBreakdown& l) { return l.l_reg; }},
    };
    int row = 0;
    for (const auto& s : series) {
        svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1\" points=\"" << line(s.get)
            << "\"/>\n";
        svg << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 15 + 18 * row++ << "\" font-size=\"12\" fill=\""
            << s.color << "\">" << s.name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

namespace {

// Relative to the report directory when the checkpoint lives inside it, so reports relocate.
std::string checkpoint_entry(const std::string& path, const fs::path& dir) {
    if (path.empty()) return path;
    const fs::path p(path);
    if (fs::weakly_canonical(p.parent_path()) == fs::weakly_canonical(dir)) return p.filename().string();
    return path;
}

}  // namespace

void emit_report(const RunRecord& record, const std::string& output_dir) {
    const fs::path dir(output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create report directory " + output_dir);

    json epochs = json::array();
    for (const auto& e : record.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"phase", e.phase}, {"loss", loss_json(e.mean_loss)},
                          {"val_dist", opt(e.val_dist)}});
    }
    json report = {{"mode", mode_name(record.mode)},
                   {"test", json::parse(eval::metrics_to_json(record.metrics))},
                   {"bbox_center_baseline", json::parse(eval::metrics_to_json(record.baseline_metrics))},
                   {"epochs", epochs},
                   {"steps", record.step_losses.size()},
                   {"wall_seconds", record.wall_seconds},
                   {"checkpoint", checkpoint_entry(record.checkpoint_path, dir)}};
    if (record.ssl) {
        json rounds = json::array();
        for (const auto& r : record.ssl->rounds) {
            rounds.push_back({{"round", r.round}, {"bank_size", r.bank_size}, {"pseudo_labels", r.pseudo_labels},
                              {"val_dist", opt(r.val_dist)}});
        }
        report["ssl"] = {{"teacher_test", json::parse(eval::metrics_to_json(record.ssl->teacher_metrics))},
                         {"labeled_images", record.ssl->labeled_images},
                         {"unlabeled_images", record.ssl->unlabeled_images},
                         {"rounds", rounds}};
    }
    write_text(dir / "metrics.json", report.dump(2) + "\n");
    write_text(dir / "config.json", record.config_echo);

    std::ostringstream log;
    for (std::size_t i = 0; i < record.step_losses.size(); ++i) {
        auto j = loss_json(record.step_losses[i]);
        j["step"] = i + 1;
        log << j.dump() << '\n';
    }
    write_text(dir / "loss_log.jsonl", log.str());
    write_text(dir / "loss.svg", loss_curve_svg(record.step_losses));
    for (std::size_t i = 0; i < record.overlays.size(); ++i) {
        data::write_ppm(render_overlay(record.overlays[i]), dir / ("overlay_" + std::to_string(i) + ".ppm"));
    }
}

eval::MetricsReport read_report_metrics(const std::string& metrics_file) {
    std::ifstream in(metrics_file);
    if (!in) throw IoError("cannot read " + metrics_file);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return eval::metrics_from_json(json::parse(ss.str()).at("test").dump());
    } catch (const json::exception& e) {
        throw ParseError(metrics_file + ": " + e.what());
    }
}

}  // namespace wsd::experiment
