#include "foodcal/measurement.hpp"

#include "foodcal/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace foodcal {

namespace {

constexpr std::array<std::string_view, 6> kNames{"Singara", "Somusa", "Puri", "Peaju", "Beguni", "Coin"};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace

std::string_view class_name(ClassLabel label) { return kNames[static_cast<std::size_t>(label)]; }

ClassLabel parse_class(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return static_cast<ClassLabel>(i);
    }
    throw Error(ErrorCode::ParseError, "unknown class label '" + std::string(name) + "'");
}

CalorieDensityTable CalorieDensityTable::defaults() {
    CalorieDensityTable t;
    t.density_ = {2.61, 2.11, 2.44, 1.18, 1.48};
    return t;
}

CalorieDensityTable CalorieDensityTable::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open density table " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "class,kcal_per_gram") {
        throw Error(ErrorCode::ParseError, path.string() + ": expected header 'class,kcal_per_gram'");
    }
    CalorieDensityTable t;
    std::array<bool, kNumFoodClasses> seen{};
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected two fields");
        }
        const ClassLabel label = parse_class(trim(line.substr(0, comma)));
        if (!is_food(label)) {
            throw Error(ErrorCode::ParseError, path.string() + ": Coin has no caloric density");
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            const std::string field = trim(line.substr(comma + 1));
            value = std::stod(field, &used);
            if (used != field.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad density value");
        }
        t.set(label, value);
        seen[static_cast<std::size_t>(label)] = true;
    }
    for (std::size_t i = 0; i < kNumFoodClasses; ++i) {
        if (!seen[i]) {
            throw Error(ErrorCode::ParseError, path.string() + ": missing density for " + std::string(kNames[i]));
        }
    }
    return t;
}

double CalorieDensityTable::density(ClassLabel label) const {
    if (!is_food(label)) throw Error(ErrorCode::UnknownDensity, "no caloric density for Coin");
    return density_[static_cast<std::size_t>(label)];
}

void CalorieDensityTable::set(ClassLabel label, double kcal_per_gram) {
    if (!is_food(label)) throw Error(ErrorCode::UnknownDensity, "no caloric density for Coin");
    if (!(kcal_per_gram > 0.0) || !std::isfinite(kcal_per_gram)) {
        throw Error(ErrorCode::InvalidDimension, "caloric density must be positive");
    }
    density_[static_cast<std::size_t>(label)] = kcal_per_gram;
}

const DetectionInstance& select_reference(const std::vector<DetectionInstance>& detections) {
    const DetectionInstance* best = nullptr;
    for (const auto& d : detections) {
        if (d.label != ClassLabel::Coin) continue;
        if (best == nullptr || d.confidence > best->confidence) best = &d;
    }
    if (best == nullptr) throw Error(ErrorCode::NoReferenceObject, "no Coin instance among detections");
    return *best;
}

ScaleFactor scale_factor(double coin_bbox_h_px, double coin_bbox_w_px, double coin_diameter_mm) {
    auto valid = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!valid(coin_bbox_h_px) || !valid(coin_bbox_w_px)) {
        throw Error(ErrorCode::InvalidDimension, "coin pixel height and width must be positive");
    }
    if (!valid(coin_diameter_mm)) throw Error(ErrorCode::InvalidDimension, "coin diameter must be positive");
    ScaleFactor s;
    s.s_h = coin_diameter_mm / coin_bbox_h_px;
    s.s_w = coin_diameter_mm / coin_bbox_w_px;
    s.s_f = (s.s_h + s.s_w) / 2.0;
    return s;
}

ShapeStats instance_geometry(const BinaryMask& mask) {
    const auto comps = connected_components(mask);
    if (comps.empty()) throw Error(ErrorCode::EmptyMask, "instance mask has no foreground");
    std::size_t best = 0;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const auto c = comps[i].count();
        if (c > best_count) {
            best = i;
            best_count = c;
        }
    }
    return shape_stats(trace_contour(comps[best]));
}

ExtractionResult extract_features(const std::vector<DetectionInstance>& detections, const ScaleFactor& scale) {
    if (!(scale.s_f > 0.0) || !std::isfinite(scale.s_f)) {
        throw Error(ErrorCode::InvalidDimension, "scale factor must be positive");
    }
    ExtractionResult out;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const auto& det = detections[i];
        if (!is_food(det.label)) continue;
        ShapeStats px;
        try {
            px = instance_geometry(det.mask);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyMask) throw;
            out.skipped.push_back({i, e.what()});
            continue;
        }
        FeatureRecord r;
        r.label = det.label;
        r.height_mm = px.bbox.h * scale.s_f;
        r.width_mm = px.bbox.w * scale.s_f;
        r.area_mm2 = px.area_px * scale.s_f * scale.s_f;
        r.perimeter_mm = px.perimeter_px * scale.s_f;
        out.records.push_back(r);
        out.source_index.push_back(i);
    }
    return out;
}

ExtractionResult measure_scene(const std::vector<DetectionInstance>& detections, double coin_diameter_mm) {
    const auto& coin = select_reference(detections);
    return extract_features(detections, scale_factor(coin.bbox.h, coin.bbox.w, coin_diameter_mm));
}

double calorie_label(double weight_g, ClassLabel label, const CalorieDensityTable& table) {
    if (!(weight_g >= 0.0) || !std::isfinite(weight_g)) {
        throw Error(ErrorCode::InvalidDimension, "weight must be non-negative");
    }
    return weight_g * table.density(label);
}

}  // namespace foodcal
