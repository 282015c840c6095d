#include "foodcal/manifest.hpp"

#include "foodcal/error.hpp"
#include "json_field.hpp"

#include <fstream>
#include <sstream>

namespace foodcal {

using detail::get_field;

nlohmann::ordered_json to_json(const Manifest& m) {
    auto images = nlohmann::ordered_json::array();
    for (const auto& img : m.images) {
        auto instances = nlohmann::ordered_json::array();
        for (const auto& inst : img.instances) {
            nlohmann::ordered_json j;
            j["class"] = std::string(class_name(inst.label));
            if (inst.confidence) j["confidence"] = *inst.confidence;
            j["bbox"] = {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h};
            j["mask"] = inst.mask_file;
            if (inst.calories_kcal) j["calories_kcal"] = *inst.calories_kcal;
            instances.push_back(j);
        }
        nlohmann::ordered_json j;
        j["id"] = img.id;
        j["width"] = img.width;
        j["height"] = img.height;
        j["instances"] = instances;
        images.push_back(j);
    }
    nlohmann::ordered_json j;
    j["images"] = images;
    return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    for (const auto& ji : get_field<nlohmann::json>(j, "images")) {
        ManifestImage img;
        img.id = get_field<std::string>(ji, "id");
        img.width = get_field<int>(ji, "width");
        img.height = get_field<int>(ji, "height");
        if (img.width < 1 || img.height < 1) throw Error(ErrorCode::ParseError, "image '" + img.id + "' has no area");
        for (const auto& jn : get_field<nlohmann::json>(ji, "instances")) {
            ManifestInstance inst;
            inst.label = parse_class(get_field<std::string>(jn, "class"));
            if (jn.contains("confidence")) inst.confidence = get_field<double>(jn, "confidence");
            const auto box = get_field<std::vector<int>>(jn, "bbox");
            if (box.size() != 4 || box[2] < 0 || box[3] < 0) {
                throw Error(ErrorCode::ParseError, "bbox must be [x, y, w, h] with w, h >= 0");
            }
            inst.bbox = PixelBox{box[0], box[1], box[2], box[3]};
            inst.mask_file = get_field<std::string>(jn, "mask");
            if (jn.contains("calories_kcal")) inst.calories_kcal = get_field<double>(jn, "calories_kcal");
            img.instances.push_back(std::move(inst));
        }
        m.images.push_back(std::move(img));
    }
    return m;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    write_text_file(path, to_json(m).dump(2) + "\n");
}

std::vector<DetectionInstance> load_instances(const ManifestImage& image, const std::filesystem::path& base_dir) {
    std::vector<DetectionInstance> out;
    for (const auto& inst : image.instances) {
        DetectionInstance d;
        d.label = inst.label;
        d.confidence = inst.confidence.value_or(1.0);
        d.bbox = inst.bbox;
        d.mask = read_pgm(base_dir / inst.mask_file);
        if (d.mask.width() != image.width || d.mask.height() != image.height) {
            throw Error(ErrorCode::ShapeMismatch, inst.mask_file + " does not match image '" + image.id + "' size");
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace foodcal
