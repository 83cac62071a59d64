#include "wsd/data/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <system_error>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "wsd/errors.hpp"

namespace wsd::data {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

// Shortest representation that parses back to the same double.
std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& text, const std::string& file, const std::string& field) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
    while (last > first && std::isspace(static_cast<unsigned char>(*(last - 1)))) --last;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || first == last) {
        throw ParseError(file + ": field '" + field + "' is not a number ('" + text + "')");
    }
    return v;
}

std::string required_text(const pt::ptree& node, const std::string& path, const std::string& file,
                          const std::string& field_prefix) {
    const auto child = node.get_child_optional(path);
    if (!child) {
        throw ParseError(file + ": missing field '" + field_prefix + path + "'");
    }
    return child->get_value<std::string>();
}

double required_number(const pt::ptree& node, const std::string& path, const std::string& file,
                       const std::string& field_prefix) {
    return parse_number(required_text(node, path, file, field_prefix), file, field_prefix + path);
}

ImageSample parse_document(const fs::path& xml_path, Image image, const std::string& id) {
    const std::string file = xml_path.string();
    pt::ptree tree;
    try {
        pt::read_xml(file, tree);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError(file + ": malformed XML: " + e.message());
    }
    const auto root = tree.get_child_optional("annotation");
    if (!root) {
        throw ParseError(file + ": missing field 'annotation'");
    }
    if (const auto size = root->get_child_optional("size")) {
        const double w = required_number(*size, "width", file, "size.");
        const double h = required_number(*size, "height", file, "size.");
        if (static_cast<int>(w) != image.width || static_cast<int>(h) != image.height) {
            throw ParseError(file + ": field 'size' disagrees with the image dimensions");
        }
    }

    ImageSample sample;
    sample.id = id;
    sample.image = std::move(image);
    sample.labeled = true;

    int index = 0;
    for (const auto& [key, obj] : *root) {
        if (key != "object") {
            continue;
        }
        const std::string prefix = "object[" + std::to_string(index) + "].";
        const std::string name = required_text(obj, "name", file, prefix);
        const auto cls = parse_class(name);
        if (!cls) {
            throw ParseError(file + ": field '" + prefix + "name' has unknown class '" + name + "'");
        }
        LabeledInstance inst;
        inst.class_id = *cls;
        inst.bbox.x_min = required_number(obj, "bndbox.xmin", file, prefix);
        inst.bbox.y_min = required_number(obj, "bndbox.ymin", file, prefix);
        inst.bbox.x_max = required_number(obj, "bndbox.xmax", file, prefix);
        inst.bbox.y_max = required_number(obj, "bndbox.ymax", file, prefix);
        if (const auto stem = obj.get_child_optional("stem")) {
            inst.stem = Point{required_number(*stem, "x", file, prefix + "stem."),
                              required_number(*stem, "y", file, prefix + "stem.")};
        }
        sample.instances.push_back(inst);
        ++index;
    }
    return sample;
}

struct SidecarStem {
    std::string image_id;
    Point point;
    int line = 0;
};

std::vector<SidecarStem> read_sidecar(const fs::path& path) {
    std::vector<SidecarStem> stems;
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') {
            continue;
        }
        std::istringstream ss(line);
        SidecarStem s;
        std::string xs;
        std::string ys;
        if (!(ss >> s.image_id >> xs >> ys)) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": expected '<image_id> <x> <y>'");
        }
        const std::string where = "line " + std::to_string(line_no);
        s.point = {parse_number(xs, path.string(), where + " x"), parse_number(ys, path.string(), where + " y")};
        s.line = line_no;
        stems.push_back(std::move(s));
    }
    return stems;
}

// Joins a stem to the smallest-area weed box that contains it and has no stem yet.
void join_stem(ImageSample& sample, const SidecarStem& stem, const fs::path& sidecar) {
    std::optional<std::size_t> best;
    bool duplicate = false;
    for (std::size_t i = 0; i < sample.instances.size(); ++i) {
        const auto& inst = sample.instances[i];
        if (!inst.is_weed() || !inst.bbox.contains(stem.point)) {
            continue;
        }
        if (inst.stem) {
            duplicate = duplicate || *inst.stem == stem.point;
            continue;
        }
        if (!best || inst.bbox.area() < sample.instances[*best].bbox.area()) {
            best = i;
        }
    }
    if (best) {
        sample.instances[*best].stem = stem.point;
    } else if (!duplicate) {
        throw ValidationError(sidecar.string() + " line " + std::to_string(stem.line) + ": stem (" +
                              format_number(stem.point.x) + ", " + format_number(stem.point.y) + ") of image " +
                              stem.image_id + " lies outside every weed box");
    }
}

}  // namespace

std::string annotation_document(const ImageSample& sample) {
    pt::ptree root;
    root.put("filename", sample.id + kImageExtension);
    root.put("size.width", sample.image.width);
    root.put("size.height", sample.image.height);
    root.put("size.depth", 3);
    for (const auto& inst : sample.instances) {
        pt::ptree obj;
        obj.put("name", std::string(class_name(inst.class_id)));
        obj.put("bndbox.xmin", format_number(inst.bbox.x_min));
        obj.put("bndbox.ymin", format_number(inst.bbox.y_min));
        obj.put("bndbox.xmax", format_number(inst.bbox.x_max));
        obj.put("bndbox.ymax", format_number(inst.bbox.y_max));
        if (inst.stem) {
            obj.put("stem.x", format_number(inst.stem->x));
            obj.put("stem.y", format_number(inst.stem->y));
        }
        root.add_child("object", obj);
    }
    pt::ptree doc;
    doc.add_child("annotation", root);
    std::ostringstream out;
    pt::write_xml(out, doc, pt::xml_writer_make_settings<std::string>(' ', 2));
    return out.str();
}

std::vector<ImageSample> load_annotations(const fs::path& directory) {
    if (!fs::is_directory(directory)) {
        throw IoError("not a directory: " + directory.string());
    }
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (entry.is_regular_file() && entry.path().extension() == kImageExtension) {
            images.push_back(entry.path());
        }
    }
    std::sort(images.begin(), images.end());

    std::vector<ImageSample> samples;
    std::map<std::string, std::size_t> by_id;
    for (const auto& image_path : images) {
        const std::string id = image_path.stem().string();
        Image image = read_ppm(image_path);
        const fs::path xml = directory / (id + kAnnotationExtension);
        ImageSample sample;
        if (fs::exists(xml)) {
            sample = parse_document(xml, std::move(image), id);
        } else {
            sample.id = id;
            sample.image = std::move(image);
            sample.labeled = false;
        }
        by_id[id] = samples.size();
        samples.push_back(std::move(sample));
    }

    const fs::path sidecar = directory / kStemSidecarName;
    if (fs::exists(sidecar)) {
        for (const auto& stem : read_sidecar(sidecar)) {
            const auto it = by_id.find(stem.image_id);
            if (it == by_id.end() || !samples[it->second].labeled) {
                throw ValidationError(sidecar.string() + " line " + std::to_string(stem.line) +
                                      ": no annotated image with id '" + stem.image_id + "'");
            }
            join_stem(samples[it->second], stem, sidecar);
        }
    }
    for (const auto& s : samples) {
        validate(s);
    }
    return samples;
}

void save_annotations(std::span<const ImageSample> samples, const fs::path& directory) {
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec || !fs::is_directory(directory)) {
        throw IoError("cannot create directory " + directory.string());
    }
    std::vector<ManifestEntry> manifest;
    for (const auto& s : samples) {
        validate(s);
        const std::string image_name = s.id + kImageExtension;
        write_ppm(s.image, directory / image_name);
        const fs::path xml = directory / (s.id + kAnnotationExtension);
        if (s.labeled) {
            std::ofstream out(xml);
            if (!out) {
                throw IoError("cannot write " + xml.string());
            }
            out << annotation_document(s);
        } else {
            fs::remove(xml, ec);
        }
        manifest.push_back({s.id, s.labeled, image_name});
    }
    write_manifest(manifest, directory / kManifestName);
}

std::vector<ManifestEntry> read_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw IoError("cannot open " + file.string());
    }
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ss(line);
        ManifestEntry e;
        int flag = -1;
        if (!(ss >> e.id >> flag >> e.path) || (flag != 0 && flag != 1)) {
            throw ParseError(file.string() + ": line " + std::to_string(line_no) +
                             ": expected '<id> <0|1> <path>'");
        }
        e.labeled = flag == 1;
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(std::span<const ManifestEntry> entries, const fs::path& file) {
    std::ofstream out(file);
    if (!out) {
        throw IoError("cannot write " + file.string());
    }
    out << "# id labeled path\n";
    for (const auto& e : entries) {
        out << e.id << ' ' << (e.labeled ? 1 : 0) << ' ' << e.path << '\n';
    }
}

}  // namespace wsd::data
