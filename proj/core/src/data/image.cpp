#include "wsd/data/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "wsd/errors.hpp"

namespace wsd::data {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
void skip_header_space(std::istream& in) {
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image " + path.string());
    }
    std::string magic;
    in >> magic;
    if (magic != "P6") {
        throw ParseError(path.string() + ": unsupported image format '" + magic + "' (expected P6)");
    }
    int w = 0;
    int h = 0;
    int maxval = 0;
    skip_header_space(in);
    in >> w;
    skip_header_space(in);
    in >> h;
    skip_header_space(in);
    in >> maxval;
    if (!in || w <= 0 || h <= 0 || maxval != 255) {
        throw ParseError(path.string() + ": bad PPM header");
    }
    in.get();
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw ParseError(path.string() + ": truncated pixel data");
    }
    return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write image " + path.string());
    }
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

Image resample(const Image& src, const Box& window, int out_width, int out_height) {
    Image dst(out_width, out_height);
    const double sx = window.width() / out_width;
    const double sy = window.height() / out_height;
    for (int j = 0; j < out_height; ++j) {
        const double fy = std::clamp(window.y_min + (j + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int i = 0; i < out_width; ++i) {
            const double fx = std::clamp(window.x_min + (i + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                const double bottom = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                const double v = (1.0 - wy) * top + wy * bottom;
                dst.at(i, j, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return dst;
}

}  // namespace wsd::data
