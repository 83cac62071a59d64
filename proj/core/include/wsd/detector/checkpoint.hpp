#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsd/detector/config.hpp"

namespace wsd::detector {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    DetectorConfig config;
    std::vector<double> params;
    std::uint64_t step = 0;
};

/// Binary container: magic, format version, JSON config echo, step counter,
/// then the parameter blob as little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const DetectorConfig& config, std::span<const double> params,
                     std::uint64_t step);

/// When `expected` is given, a checkpoint trained under a different
/// configuration is rejected with ConfigError.
Checkpoint load_checkpoint(const std::filesystem::path& path, const DetectorConfig* expected = nullptr);

std::string to_json(const DetectorConfig& config);
DetectorConfig detector_config_from_json(std::string_view text);

}  // namespace wsd::detector
