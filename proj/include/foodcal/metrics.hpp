#pragma once

#include "foodcal/maskgeom.hpp"
#include "foodcal/measurement.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace foodcal {

struct RegressionReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
};

// Throws LengthMismatch (including empty input), DegenerateTarget when the
// truth has zero variance.
RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> truth);
inline double rmse_from_mse(double mse) { return std::sqrt(mse); }

// Boxes are half-open pixel extents [x, x+w) x [y, y+h). Empty union gives 0.
double box_iou(const PixelBox& a, const PixelBox& b);
// Throws ShapeMismatch for differing dimensions.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

enum class IouKind { Box, Mask };

struct Detection {
    ClassLabel label = ClassLabel::Coin;
    double confidence = 1.0;  // ignored for ground truth
    PixelBox bbox;
    std::optional<BinaryMask> mask;  // required for IouKind::Mask
};

struct MatchResult {
    std::vector<std::size_t> order;       // prediction indices, confidence descending
    std::vector<bool> tp;                 // per prediction, input order
    std::vector<int> matched_gt;          // per prediction, -1 when unmatched
    std::vector<bool> gt_matched;         // per ground truth
};

// Greedy matching for one image: predictions in descending confidence (input
// order on ties) each take the unmatched same-class ground truth of highest
// IoU >= threshold (lowest index on ties).
MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<Detection>& gts,
                             double iou_threshold, IouKind kind);

// `tp` is ordered by descending confidence. 101-point interpolated AP.
// Throws NoGroundTruth when num_gt == 0.
double average_precision(const std::vector<bool>& tp, std::size_t num_gt);

struct ImageDetections {
    std::vector<Detection> preds;
    std::vector<Detection> gts;
};

struct ClassReport {
    ClassLabel label = ClassLabel::Coin;
    std::size_t num_gt = 0;
    std::size_t num_pred = 0;
    double precision = 0.0;
    double recall = 0.0;
    double ap50 = 0.0;
    double ap50_95 = 0.0;
};

struct KindReport {
    std::vector<ClassReport> classes;  // only classes with ground truth
    double precision = 0.0;
    double recall = 0.0;
    double map50 = 0.0;
    double map50_95 = 0.0;
};

struct DetectionReport {
    KindReport box;
    std::optional<KindReport> mask;  // present when every instance carries a mask
};

struct MapOptions {
    // Precision/recall headline numbers count only predictions at or above this.
    double confidence_cutoff = 0.0;
};

// The 10 IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_thresholds();

DetectionReport map_summary(const std::vector<ImageDetections>& images, const MapOptions& options = {});

// counts[truth][predicted] over all six classes.
struct ConfusionTable {
    std::array<std::array<std::size_t, 6>, 6> counts{};
};
// Throws LengthMismatch.
ConfusionTable confusion_counts(std::span<const ClassLabel> truth, std::span<const ClassLabel> predicted);

nlohmann::ordered_json to_json(const RegressionReport& r);
nlohmann::ordered_json to_json(const DetectionReport& r);
std::string format_table(const RegressionReport& r);
std::string format_table(const DetectionReport& r);
std::string format_table(const ConfusionTable& t);

}  // namespace foodcal
