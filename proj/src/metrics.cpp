#include "foodcal/metrics.hpp"

#include "foodcal/error.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <tuple>

namespace foodcal {

RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || truth.empty()) {
        throw Error(ErrorCode::LengthMismatch, "prediction and truth lists must have equal non-zero length (" +
                                                   std::to_string(pred.size()) + " vs " +
                                                   std::to_string(truth.size()) + ")");
    }
    const auto n = static_cast<double>(truth.size());
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
    double abs_sum = 0.0, sq_sum = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = pred[i] - truth[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (!(ss_tot > 0.0)) throw Error(ErrorCode::DegenerateTarget, "truth values have zero variance");
    RegressionReport r;
    r.mae = abs_sum / n;
    r.mse = sq_sum / n;
    r.rmse = std::sqrt(r.mse);
    r.r2 = 1.0 - sq_sum / ss_tot;
    return r;
}

double box_iou(const PixelBox& a, const PixelBox& b) {
    const double iw = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double ih = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = iw * ih;
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorCode::ShapeMismatch, "mask_iou needs masks of equal size");
    }
    std::size_t inter = 0, uni = 0;
    const auto& x = a.bits();
    const auto& y = b.bits();
    for (std::size_t i = 0; i < x.size(); ++i) {
        inter += (x[i] & y[i]);
        uni += (x[i] | y[i]);
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace {

using IouMatrix = std::vector<std::vector<double>>;  // [pred][gt]

double pair_iou(const Detection& p, const Detection& g, IouKind kind) {
    if (kind == IouKind::Box) return box_iou(p.bbox, g.bbox);
    if (!p.mask || !g.mask) throw Error(ErrorCode::EmptyMask, "mask IoU requested for an instance without a mask");
    return mask_iou(*p.mask, *g.mask);
}

IouMatrix iou_matrix(const std::vector<Detection>& preds, const std::vector<Detection>& gts, IouKind kind) {
    IouMatrix m(preds.size(), std::vector<double>(gts.size(), 0.0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (preds[i].label == gts[j].label) m[i][j] = pair_iou(preds[i], gts[j], kind);
        }
    }
    return m;
}

std::vector<std::size_t> confidence_order(const std::vector<Detection>& preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
    return order;
}

MatchResult greedy_match(const std::vector<Detection>& preds, const std::vector<Detection>& gts, const IouMatrix& iou,
                         double threshold) {
    MatchResult r;
    r.order = confidence_order(preds);
    r.tp.assign(preds.size(), false);
    r.matched_gt.assign(preds.size(), -1);
    r.gt_matched.assign(gts.size(), false);
    for (auto i : r.order) {
        int best = -1;
        double best_iou = threshold;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (r.gt_matched[j] || gts[j].label != preds[i].label) continue;
            if (iou[i][j] >= best_iou && (best < 0 || iou[i][j] > best_iou)) {
                best = static_cast<int>(j);
                best_iou = iou[i][j];
            }
        }
        if (best >= 0) {
            r.tp[i] = true;
            r.matched_gt[i] = best;
            r.gt_matched[static_cast<std::size_t>(best)] = true;
        }
    }
    return r;
}

struct Scored {
    double confidence;
    std::size_t image;
    std::size_t index;
    bool tp;
};

// Flattens per-image matches of one class into the global ranked sequence.
std::vector<bool> ranked_tp(std::vector<Scored> all) {
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return std::tie(a.image, a.index) < std::tie(b.image, b.index);
    });
    std::vector<bool> tp;
    for (const auto& s : all) tp.push_back(s.tp);
    return tp;
}

KindReport summarize(const std::vector<ImageDetections>& images, IouKind kind, const MapOptions& options) {
    std::vector<IouMatrix> ious;
    for (const auto& img : images) ious.push_back(iou_matrix(img.preds, img.gts, kind));

    constexpr std::size_t kClasses = 6;
    std::array<std::size_t, kClasses> num_gt{}, num_pred{};
    for (const auto& img : images) {
        for (const auto& g : img.gts) ++num_gt[static_cast<std::size_t>(g.label)];
        for (const auto& p : img.preds) ++num_pred[static_cast<std::size_t>(p.label)];
    }

    std::array<std::array<double, 10>, kClasses> ap{};
    std::array<std::size_t, kClasses> tp_at_cut{}, pred_at_cut{};
    const auto thresholds = coco_thresholds();
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        std::array<std::vector<Scored>, kClasses> scored;
        for (std::size_t im = 0; im < images.size(); ++im) {
            const auto& img = images[im];
            const auto m = greedy_match(img.preds, img.gts, ious[im], thresholds[t]);
            for (std::size_t i = 0; i < img.preds.size(); ++i) {
                const auto c = static_cast<std::size_t>(img.preds[i].label);
                scored[c].push_back(Scored{img.preds[i].confidence, im, i, m.tp[i]});
                if (t == 0 && img.preds[i].confidence >= options.confidence_cutoff) {
                    ++pred_at_cut[c];
                    tp_at_cut[c] += m.tp[i] ? 1 : 0;
                }
            }
        }
        for (std::size_t c = 0; c < kClasses; ++c) {
            if (num_gt[c] > 0) ap[c][t] = average_precision(ranked_tp(std::move(scored[c])), num_gt[c]);
        }
    }

    KindReport r;
    for (std::size_t c = 0; c < kClasses; ++c) {
        if (num_gt[c] == 0) continue;
        ClassReport cr;
        cr.label = static_cast<ClassLabel>(c);
        cr.num_gt = num_gt[c];
        cr.num_pred = num_pred[c];
        cr.precision = pred_at_cut[c] ? static_cast<double>(tp_at_cut[c]) / static_cast<double>(pred_at_cut[c]) : 0.0;
        cr.recall = static_cast<double>(tp_at_cut[c]) / static_cast<double>(num_gt[c]);
        cr.ap50 = ap[c][0];
        cr.ap50_95 = std::accumulate(ap[c].begin(), ap[c].end(), 0.0) / 10.0;
        r.classes.push_back(cr);
    }
    if (!r.classes.empty()) {
        const auto k = static_cast<double>(r.classes.size());
        for (const auto& cr : r.classes) {
            r.precision += cr.precision / k;
            r.recall += cr.recall / k;
            r.map50 += cr.ap50 / k;
            r.map50_95 += cr.ap50_95 / k;
        }
    }
    return r;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<Detection>& gts,
                             double iou_threshold, IouKind kind) {
    return greedy_match(preds, gts, iou_matrix(preds, gts, kind), iou_threshold);
}

double average_precision(const std::vector<bool>& tp, std::size_t num_gt) {
    if (num_gt == 0) throw Error(ErrorCode::NoGroundTruth, "average precision needs at least one ground truth");
    const std::size_t n = tp.size();
    std::vector<double> recall(n), precision(n);
    std::size_t tps = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tps += tp[i] ? 1 : 0;
        recall[i] = static_cast<double>(tps) / static_cast<double>(num_gt);
        precision[i] = static_cast<double>(tps) / static_cast<double>(i + 1);
    }
    // Precision envelope: best precision at this recall or beyond.
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

std::array<double, 10> coco_thresholds() {
    std::array<double, 10> t{};
    for (int i = 0; i < 10; ++i) t[i] = (50 + 5 * i) / 100.0;
    return t;
}

DetectionReport map_summary(const std::vector<ImageDetections>& images, const MapOptions& options) {
    DetectionReport r;
    r.box = summarize(images, IouKind::Box, options);
    bool masks = false, all_masks = true;
    for (const auto& img : images) {
        for (const auto* list : {&img.preds, &img.gts}) {
            for (const auto& d : *list) {
                masks = true;
                all_masks = all_masks && d.mask.has_value();
            }
        }
    }
    if (masks && all_masks) r.mask = summarize(images, IouKind::Mask, options);
    return r;
}

ConfusionTable confusion_counts(std::span<const ClassLabel> truth, std::span<const ClassLabel> predicted) {
    if (truth.size() != predicted.size()) throw Error(ErrorCode::LengthMismatch, "truth and prediction lists differ");
    ConfusionTable t;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++t.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return t;
}

nlohmann::ordered_json to_json(const RegressionReport& r) {
    nlohmann::ordered_json j;
    j["mae"] = r.mae;
    j["mse"] = r.mse;
    j["rmse"] = r.rmse;
    j["r2"] = r.r2;
    return j;
}

namespace {

nlohmann::ordered_json kind_json(const KindReport& k) {
    auto classes = nlohmann::ordered_json::array();
    for (const auto& c : k.classes) {
        nlohmann::ordered_json j;
        j["class"] = std::string(class_name(c.label));
        j["num_gt"] = c.num_gt;
        j["num_pred"] = c.num_pred;
        j["precision"] = c.precision;
        j["recall"] = c.recall;
        j["ap50"] = c.ap50;
        j["ap50_95"] = c.ap50_95;
        classes.push_back(j);
    }
    nlohmann::ordered_json j;
    j["precision"] = k.precision;
    j["recall"] = k.recall;
    j["map50"] = k.map50;
    j["map50_95"] = k.map50_95;
    j["classes"] = classes;
    return j;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void kind_table(std::ostringstream& os, const std::string& title, const KindReport& k) {
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %-8s %6s %6s %9s %7s %7s %9s\n", title.c_str(), "class", "gt", "pred",
                  "precision", "recall", "mAP50", "mAP50-95");
    os << line;
    for (const auto& c : k.classes) {
        std::snprintf(line, sizeof line, "%-8s %-8s %6zu %6zu %9s %7s %7s %9s\n", "", std::string(class_name(c.label)).c_str(),
                      c.num_gt, c.num_pred, fixed(c.precision, 3).c_str(), fixed(c.recall, 3).c_str(),
                      fixed(c.ap50, 3).c_str(), fixed(c.ap50_95, 3).c_str());
        os << line;
    }
    std::snprintf(line, sizeof line, "%-8s %-8s %6s %6s %9s %7s %7s %9s\n", "", "all", "", "",
                  fixed(k.precision, 3).c_str(), fixed(k.recall, 3).c_str(), fixed(k.map50, 3).c_str(),
                  fixed(k.map50_95, 3).c_str());
    os << line;
}

}  // namespace

nlohmann::ordered_json to_json(const DetectionReport& r) {
    nlohmann::ordered_json j;
    j["box"] = kind_json(r.box);
    if (r.mask) j["mask"] = kind_json(*r.mask);
    return j;
}

std::string format_table(const RegressionReport& r) {
    std::ostringstream os;
    os << "MAE   " << fixed(r.mae, 4) << "\n"
       << "MSE   " << fixed(r.mse, 4) << "\n"
       << "RMSE  " << fixed(r.rmse, 4) << "\n"
       << "R2    " << fixed(r.r2, 4) << "\n";
    return os.str();
}

std::string format_table(const DetectionReport& r) {
    std::ostringstream os;
    kind_table(os, "box", r.box);
    if (r.mask) kind_table(os, "mask", *r.mask);
    return os.str();
}

std::string format_table(const ConfusionTable& t) {
    std::ostringstream os;
    char cell[32];
    std::snprintf(cell, sizeof cell, "%-10s", "truth\\pred");
    os << cell;
    for (std::size_t c = 0; c < 6; ++c) {
        std::snprintf(cell, sizeof cell, " %8s", std::string(class_name(static_cast<ClassLabel>(c))).c_str());
        os << cell;
    }
    os << "\n";
    for (std::size_t r = 0; r < 6; ++r) {
        std::snprintf(cell, sizeof cell, "%-10s", std::string(class_name(static_cast<ClassLabel>(r))).c_str());
        os << cell;
        for (std::size_t c = 0; c < 6; ++c) {
            std::snprintf(cell, sizeof cell, " %8zu", t.counts[r][c]);
            os << cell;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace foodcal
