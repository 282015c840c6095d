#pragma once

#include "foodcal/manifest.hpp"
#include "foodcal/measurement.hpp"
#include "foodcal/rng.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace foodcal {

enum class ShapeFamily { Ellipse, Rectangle, Triangle };

const char* shape_family_name(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& name);

// Physical shape of one food class. `length` is the major extent (ellipse and
// rectangle: major axis; triangle: base) and `aspect` the minor/major ratio
// (triangle: height/base). Thickness converts area to weight.
struct ClassShape {
    ShapeFamily family = ShapeFamily::Ellipse;
    double length_min_mm = 50.0;
    double length_max_mm = 60.0;
    double aspect_min = 1.0;
    double aspect_max = 1.0;
    double thickness_g_per_mm2 = 0.01;
};

struct SceneConfig {
    int width = 640;
    int height = 640;
    int coin_diameter_min_px = 44;
    int coin_diameter_max_px = 80;
    std::array<ClassShape, kNumFoodClasses> shapes = default_shapes();
    int items_per_scene = 1;
    double boundary_noise = 0.02;  // relative radial amplitude
    double weight_noise = 0.05;    // multiplicative, uniform in [-x, x]
    int views_per_item = 10;
    int max_placement_attempts = 200;
    int margin_px = 2;
    CalorieDensityTable densities = CalorieDensityTable::defaults();

    static std::array<ClassShape, kNumFoodClasses> default_shapes();
};

// Throws InvalidArgument.
void validate(const SceneConfig& cfg);
nlohmann::ordered_json to_json(const SceneConfig& cfg);
// Missing keys keep their defaults.
SceneConfig scene_config_from_json(const nlohmann::json& j, SceneConfig base = {});

// A food item before viewing: one weight and calorie value shared by all views.
struct ItemSpec {
    ClassLabel label = ClassLabel::Singara;
    double length_mm = 0.0;
    double aspect = 1.0;
    double area_mm2 = 0.0;  // of the un-jittered outline
    double weight_g = 0.0;
    double calories_kcal = 0.0;
};

ItemSpec sample_item(const SceneConfig& cfg, ClassLabel label, Rng& rng);

struct RealBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;
};

struct InstanceTruth {
    ClassLabel label = ClassLabel::Coin;
    double area_px = 0.0;       // exact area of the rendered outline polygon
    double perimeter_px = 0.0;  // exact length of the outline polygon
    RealBox bbox_px;            // extent of the outline
    double weight_g = 0.0;      // food only
    double calories_kcal = 0.0; // food only
};

struct SceneTruth {
    int coin_diameter_px = 0;
    double mm_per_px = 0.0;  // 25.5 / coin_diameter_px
    std::vector<InstanceTruth> instances;  // parallel to Scene::instances
};

struct Scene {
    int width = 0;
    int height = 0;
    // Coin first, then food items. Boxes are the masks' pixel bounding boxes.
    std::vector<DetectionInstance> instances;
    SceneTruth truth;
};

// One view of each item plus a coin, placed without overlap. Throws PlacementFailure.
Scene render_scene(const SceneConfig& cfg, const std::vector<ItemSpec>& items, Rng& rng);
// Random classes, items_per_scene of them.
Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

// Writes `<id>_<k>.pgm` masks into `dir` and returns the manifest entry.
ManifestImage write_scene(const std::filesystem::path& dir, const std::string& id, const Scene& scene);
nlohmann::ordered_json truth_json(const std::string& id, const SceneTruth& truth);

struct RecordTruth {
    std::size_t item = 0;
    std::size_t view = 0;
    double mm_per_px = 0.0;
    double height_mm = 0.0;
    double width_mm = 0.0;
    double area_mm2 = 0.0;
    double perimeter_mm = 0.0;
};

struct GeneratedDataset {
    std::vector<FeatureRecord> records;  // pipeline-extracted, with calorie labels
    std::vector<RecordTruth> truth;      // analytic geometry per record
    nlohmann::ordered_json manifest;
};

// Items cycle through the five classes; each item is viewed views_per_item
// times (the last item may get fewer). Every view is an independent scene
// with its own derived seed, so the result does not depend on `threads`.
GeneratedDataset generate_regression_dataset(const SceneConfig& cfg, std::size_t n_records, std::uint64_t seed,
                                             int threads = 1);

}  // namespace foodcal
