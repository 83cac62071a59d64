#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wsd/data/sample.hpp"

namespace wsd::data {

/// File names used inside a dataset directory.
inline constexpr const char* kImageExtension = ".ppm";
inline constexpr const char* kAnnotationExtension = ".xml";
inline constexpr const char* kStemSidecarName = "stems.txt";
inline constexpr const char* kManifestName = "manifest.txt";

/// Reads every `<id>.ppm` in `directory`. An image with a matching `<id>.xml`
/// is labeled; stems come from inline `<stem>` elements and from the optional
/// `stems.txt` sidecar (`<image_id> <x> <y>` per line). Samples are sorted by id.
std::vector<ImageSample> load_annotations(const std::filesystem::path& directory);

/// Writes images, one annotation document per labeled sample (stems inline),
/// and the manifest. Unlabeled samples get no annotation document.
void save_annotations(std::span<const ImageSample> samples, const std::filesystem::path& directory);

struct ManifestEntry {
    std::string id;
    bool labeled = false;
    std::string path;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file);
void write_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& file);

/// Serializes one sample's annotation document; exposed for tests and tools.
std::string annotation_document(const ImageSample& sample);

}  // namespace wsd::data
