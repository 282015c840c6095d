#pragma once

#include "foodcal/dataset.hpp"
#include "foodcal/maskgeom.hpp"
#include "foodcal/measurement.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace foodcal {

// Feature layout: one-hot over the five food classes (declaration order),
// then height_mm, width_mm, area_mm2, perimeter_mm.
inline constexpr std::size_t kNumNumericFeatures = 4;
inline constexpr std::size_t kNumFeatures = kNumFoodClasses + kNumNumericFeatures;
using FeatureVector = std::array<double, kNumFeatures>;

inline constexpr double kZScoreThreshold = 2.0;
inline constexpr int kResizeTarget = 640;

struct SplitFractions {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

// Throws CoinNotEncodable.
std::array<double, kNumFoodClasses> one_hot(ClassLabel label);
std::array<double, kNumNumericFeatures> numeric_features(const FeatureRecord& r);
FeatureVector feature_vector(const FeatureRecord& r);

// Rows must carry a calorie target (ParseError otherwise).
Dataset to_dataset(const std::vector<FeatureRecord>& rows);

struct NormalizationParams {
    std::array<double, kNumNumericFeatures> min{};
    std::array<double, kNumNumericFeatures> max{};
};

// Throws EmptyDataset.
NormalizationParams minmax_fit(const std::vector<FeatureRecord>& train);
// x' = (x - min) / (max - min); constant features map to 0; no clipping.
std::vector<FeatureRecord> minmax_apply(const NormalizationParams& params, const std::vector<FeatureRecord>& rows);
FeatureVector minmax_apply(const NormalizationParams& params, const FeatureVector& features);

struct NormalizedSet {
    NormalizationParams params;
    std::vector<FeatureRecord> rows;
};
NormalizedSet minmax_fit_apply(const std::vector<FeatureRecord>& train);

// Drops every row where some numeric feature or the target has
// |x - mean| / population_std > threshold. Zero-std columns never drop a row.
// Throws TooFewRows for fewer than two rows.
std::vector<FeatureRecord> zscore_filter(const std::vector<FeatureRecord>& rows, double threshold = kZScoreThreshold);

template <typename T>
struct Partition {
    std::vector<T> train;
    std::vector<T> valid;
    std::vector<T> test;
};

// Index partition: seeded shuffle, then contiguous train/valid/test blocks with
// floor-allocated valid/test sizes (remainder goes to train).
Partition<std::size_t> split_indices(std::size_t n, const SplitFractions& fractions, std::uint64_t seed);
Partition<FeatureRecord> split(const std::vector<FeatureRecord>& rows, const SplitFractions& fractions,
                               std::uint64_t seed);

enum class Augmentation { HFlip, Rot90 };

struct AugmentedMask {
    BinaryMask mask;
    std::vector<PixelBox> boxes;
};

// HFlip: (x, y) -> (w-1-x, y). Rot90 (counter-clockwise): (x, y) -> (y, w-1-x),
// output is h x w.
AugmentedMask augment(const BinaryMask& mask, const std::vector<PixelBox>& boxes, Augmentation mode);
PixelBox augment_box(const PixelBox& box, int image_width, int image_height, Augmentation mode);

// Nearest neighbour: source index = floor(i * src / target).
BinaryMask resize_nearest(const BinaryMask& mask, int target_width = kResizeTarget,
                          int target_height = kResizeTarget);

// CSV: class,height_mm,width_mm,area_mm2,perimeter_mm,calories_kcal
// An empty calories field reads back as an unset target.
inline constexpr const char* kDatasetCsvHeader = "class,height_mm,width_mm,area_mm2,perimeter_mm,calories_kcal";
std::vector<FeatureRecord> read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const std::vector<FeatureRecord>& rows);
std::string dataset_csv(const std::vector<FeatureRecord>& rows);

// Shortest round-trip decimal form.
std::string format_double(double v);
double parse_double(const std::string& field);

}  // namespace foodcal
