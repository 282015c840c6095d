#pragma once

#include "foodcal/maskgeom.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace foodcal {

// Declaration order is significant: it fixes the one-hot layout.
enum class ClassLabel { Singara = 0, Somusa, Puri, Peaju, Beguni, Coin };

inline constexpr std::size_t kNumFoodClasses = 5;
inline constexpr std::array<ClassLabel, kNumFoodClasses> kFoodClasses{
    ClassLabel::Singara, ClassLabel::Somusa, ClassLabel::Puri, ClassLabel::Peaju, ClassLabel::Beguni};

// Bangladeshi 5 Taka coin.
inline constexpr double kCoinDiameterMm = 25.5;

std::string_view class_name(ClassLabel label);
// Case-sensitive; throws Error(ParseError) on unknown names.
ClassLabel parse_class(std::string_view name);
inline bool is_food(ClassLabel label) { return label != ClassLabel::Coin; }

struct DetectionInstance {
    ClassLabel label = ClassLabel::Coin;
    double confidence = 1.0;
    PixelBox bbox;
    BinaryMask mask{1, 1};
};

// Millimetres per pixel; s_f is the mean of the height and width factors.
struct ScaleFactor {
    double s_h = 0.0;
    double s_w = 0.0;
    double s_f = 0.0;
};

// kcal per gram for each food class.
class CalorieDensityTable {
public:
    // Singara 2.61, Somusa 2.11, Puri 2.44, Peaju 1.18, Beguni 1.48.
    static CalorieDensityTable defaults();
    // CSV with header `class,kcal_per_gram`; every food class must be present.
    static CalorieDensityTable load_csv(const std::filesystem::path& path);

    double density(ClassLabel label) const;
    void set(ClassLabel label, double kcal_per_gram);

private:
    std::array<double, kNumFoodClasses> density_{};
};

struct FeatureRecord {
    ClassLabel label = ClassLabel::Singara;
    double height_mm = 0.0;
    double width_mm = 0.0;
    double area_mm2 = 0.0;
    double perimeter_mm = 0.0;
    std::optional<double> calories_kcal;
};

struct SkippedInstance {
    std::size_t index = 0;
    std::string reason;
};

struct ExtractionResult {
    std::vector<FeatureRecord> records;
    // Index into the detections list for each record.
    std::vector<std::size_t> source_index;
    std::vector<SkippedInstance> skipped;
};

// Highest-confidence Coin; earliest index wins ties. Throws NoReferenceObject.
const DetectionInstance& select_reference(const std::vector<DetectionInstance>& detections);

// Throws InvalidDimension unless both pixel sizes and the diameter are positive and finite.
ScaleFactor scale_factor(double coin_bbox_h_px, double coin_bbox_w_px, double coin_diameter_mm = kCoinDiameterMm);

// Pixel geometry of one instance mask: stats of the outer contour of its
// largest 8-connected component. Throws EmptyMask.
ShapeStats instance_geometry(const BinaryMask& mask);

// Converts every food instance to millimetre features. Coins are excluded and
// instances with empty masks are reported in `skipped`.
ExtractionResult extract_features(const std::vector<DetectionInstance>& detections, const ScaleFactor& scale);

// select_reference + scale_factor (coin bbox) + extract_features.
ExtractionResult measure_scene(const std::vector<DetectionInstance>& detections,
                               double coin_diameter_mm = kCoinDiameterMm);

// C = W x D. Throws UnknownDensity for Coin, InvalidDimension for negative weight.
double calorie_label(double weight_g, ClassLabel label, const CalorieDensityTable& table);

}  // namespace foodcal
