#include "wsd/detector/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "../json_io.hpp"
#include "wsd/detector/network.hpp"
#include "wsd/errors.hpp"

namespace wsd::detector {

namespace {

constexpr std::array<char, 8> kMagic = {'W', 'S', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& file) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw ParseError(file + ": truncated checkpoint");
    }
    return v;
}

}  // namespace

std::string to_json(const DetectorConfig& config) {
    return nlohmann::json(config).dump();
}

DetectorConfig detector_config_from_json(std::string_view text) {
    try {
        return nlohmann::json::parse(text).get<DetectorConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("detector config: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const DetectorConfig& config, std::span<const double> params,
                     std::uint64_t step) {
    if (params.size() != Network(config).parameter_count()) {
        throw ConfigError("checkpoint: parameter count does not match the configuration");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    const std::string echo = to_json(config);
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(echo.size()));
    out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
    write_pod(out, step);
    write_pod(out, static_cast<std::uint64_t>(params.size()));
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
    if (!out) {
        throw IoError("write failed for checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const DetectorConfig* expected) {
    const std::string file = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + file);
    }
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw ParseError(file + ": not a checkpoint file");
    }
    const auto version = read_pod<std::uint32_t>(in, file);
    if (version != kCheckpointVersion) {
        throw ParseError(file + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto echo_size = read_pod<std::uint64_t>(in, file);
    if (echo_size > (1u << 24)) {
        throw ParseError(file + ": implausible config size");
    }
    std::string echo(echo_size, '\0');
    in.read(echo.data(), static_cast<std::streamsize>(echo_size));
    Checkpoint ck;
    ck.config = detector_config_from_json(echo);
    ck.config.validate();
    if (expected && !(*expected == ck.config)) {
        throw ConfigError(file + ": checkpoint was trained with a different detector configuration");
    }
    ck.step = read_pod<std::uint64_t>(in, file);
    const auto count = read_pod<std::uint64_t>(in, file);
    if (count != Network(ck.config).parameter_count()) {
        throw ConfigError(file + ": parameter blob does not match the echoed configuration");
    }
    ck.params.resize(count);
    in.read(reinterpret_cast<char*>(ck.params.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) {
        throw ParseError(file + ": truncated parameter blob");
    }
    return ck;
}

}  // namespace wsd::detector
