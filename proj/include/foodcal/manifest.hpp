#pragma once

#include "foodcal/measurement.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace foodcal {

// Annotation / prediction manifest shared by synth, extract, pipeline and
// detmetrics:
//   {"images": [{"id", "width", "height",
//                "instances": [{"class", "confidence"?, "bbox": [x, y, w, h], "mask",
//                               "calories_kcal"?}]}]}
// Mask paths are PGM files relative to the manifest's directory.
struct ManifestInstance {
    ClassLabel label = ClassLabel::Coin;
    std::optional<double> confidence;
    PixelBox bbox;
    std::string mask_file;
    std::optional<double> calories_kcal;  // regression target, when known
};

struct ManifestImage {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<ManifestInstance> instances;
};

struct Manifest {
    std::vector<ManifestImage> images;
};

nlohmann::ordered_json to_json(const Manifest& m);
// Throws ParseError.
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// Loads every instance mask of one image; a missing confidence reads as 1.
// Throws IoError, ParseError, ShapeMismatch (mask size differs from the image).
std::vector<DetectionInstance> load_instances(const ManifestImage& image, const std::filesystem::path& base_dir);

// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace foodcal
