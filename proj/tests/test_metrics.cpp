#include "foodcal/error.hpp"
#include "foodcal/manifest.hpp"
#include "foodcal/metrics.hpp"
#include "foodcal/rng.hpp"
#include "detection_oracle.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>

namespace foodcal {
namespace {

Detection det(ClassLabel c, PixelBox b, double conf = 1.0) {
    Detection d;
    d.label = c;
    d.bbox = b;
    d.confidence = conf;
    return d;
}

TEST(Regression, HandExamples) {
    const std::vector<double> t{1, 3};
    const auto same = regression_metrics(t, t);
    EXPECT_EQ(same.mae, 0.0);
    EXPECT_EQ(same.r2, 1.0);
    const auto r = regression_metrics(std::vector<double>{2, 4}, t);
    EXPECT_EQ(r.mae, 1.0);
    EXPECT_EQ(r.mse, 1.0);
    EXPECT_EQ(r.rmse, 1.0);
    EXPECT_EQ(r.r2, 0.0);
}

TEST(Regression, ReportedMseToRmse) {
    EXPECT_NEAR(rmse_from_mse(121.80), 11.04, 0.01);
    EXPECT_NEAR(rmse_from_mse(304.40), 17.45, 0.01);
    EXPECT_NEAR(rmse_from_mse(199.07), 14.11, 0.01);
}

TEST(Regression, Errors) {
    try {
        regression_metrics(std::vector<double>{1, 2}, std::vector<double>{1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
    EXPECT_THROW(regression_metrics(std::vector<double>{}, std::vector<double>{}), Error);
    try {
        regression_metrics(std::vector<double>{1, 2}, std::vector<double>{5, 5});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateTarget);
    }
}

TEST(Regression, Properties) {
    Rng rng(1);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 2 + rng.index(50);
        std::vector<double> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.normal() * 100;
            p[i] = y[i] + rng.normal() * 20;
        }
        const auto r = regression_metrics(p, y);
        EXPECT_LE(r.mae, r.rmse + 1e-12);
        EXPECT_LE(r.r2, 1.0);
        EXPECT_EQ(r.rmse, std::sqrt(r.mse));
    }
}

TEST(Iou, Boxes) {
    const PixelBox a{0, 0, 2, 2};
    EXPECT_EQ(box_iou(a, a), 1.0);
    EXPECT_EQ(box_iou(a, {5, 5, 2, 2}), 0.0);
    EXPECT_EQ(box_iou(a, {2, 0, 2, 2}), 0.0);  // touching edges do not overlap
    EXPECT_DOUBLE_EQ(box_iou(a, {1, 0, 2, 2}), 1.0 / 3.0);
    EXPECT_EQ(box_iou({0, 0, 0, 0}, {0, 0, 0, 0}), 0.0);
}

TEST(Iou, MasksMatchBoxesForRectangles) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        auto rect = [&] {
            const int w = 1 + static_cast<int>(rng.index(10)), h = 1 + static_cast<int>(rng.index(10));
            return PixelBox{static_cast<int>(rng.index(21 - w)), static_cast<int>(rng.index(21 - h)), w, h};
        };
        const auto a = rect(), b = rect();
        const auto ma = oracle::filled_rect(20, 20, a.x, a.y, a.w, a.h);
        const auto mb = oracle::filled_rect(20, 20, b.x, b.y, b.w, b.h);
        EXPECT_DOUBLE_EQ(mask_iou(ma, mb), box_iou(a, b));
        EXPECT_EQ(mask_iou(ma, mb), mask_iou(mb, ma));
        EXPECT_EQ(mask_iou(ma, ma), 1.0);
    }
    EXPECT_THROW(mask_iou(BinaryMask(2, 2), BinaryMask(3, 2)), Error);
    EXPECT_EQ(mask_iou(BinaryMask(2, 2), BinaryMask(2, 2)), 0.0);
}

TEST(Matching, Basics) {
    const std::vector<Detection> gts{det(ClassLabel::Puri, {0, 0, 10, 10})};
    auto m = match_detections({det(ClassLabel::Puri, {0, 0, 10, 10})}, gts, 0.5, IouKind::Box);
    EXPECT_TRUE(m.tp[0]);
    EXPECT_TRUE(m.gt_matched[0]);

    m = match_detections({det(ClassLabel::Puri, {0, 0, 10, 10}, 0.3), det(ClassLabel::Puri, {0, 0, 10, 10}, 0.8)},
                         gts, 0.5, IouKind::Box);
    EXPECT_FALSE(m.tp[0]);
    EXPECT_TRUE(m.tp[1]);
    EXPECT_EQ(m.order, (std::vector<std::size_t>{1, 0}));

    m = match_detections({det(ClassLabel::Peaju, {0, 0, 10, 10})}, gts, 0.5, IouKind::Box);
    EXPECT_FALSE(m.tp[0]);
    EXPECT_FALSE(m.gt_matched[0]);
}

TEST(Matching, PrefersHighestIouGt) {
    const std::vector<Detection> gts{det(ClassLabel::Coin, {0, 0, 10, 10}), det(ClassLabel::Coin, {2, 0, 10, 10})};
    const auto m = match_detections({det(ClassLabel::Coin, {2, 0, 10, 10})}, gts, 0.5, IouKind::Box);
    EXPECT_EQ(m.matched_gt[0], 1);
}

TEST(AveragePrecision, HandCases) {
    EXPECT_EQ(average_precision({true}, 1), 1.0);
    EXPECT_NEAR(average_precision({false, true}, 1), 0.5, 1e-12);
    EXPECT_EQ(average_precision({false, false}, 2), 0.0);
    EXPECT_EQ(average_precision({}, 3), 0.0);
    // Half the ground truth found with perfect precision: recall points 0..0.5.
    EXPECT_NEAR(average_precision({true}, 2), 51.0 / 101.0, 1e-12);
    try {
        average_precision({true}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoGroundTruth);
    }
}

TEST(MapSummary, MatchesBruteForceOracle) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto s = oracle::random_micro_scene(rng);
        const auto got = map_summary(s).box;
        const auto want = oracle::map_summary_box(s);
        ASSERT_EQ(got.classes.size(), want.classes.size());
        for (std::size_t c = 0; c < want.classes.size(); ++c) {
            EXPECT_EQ(got.classes[c].label, want.classes[c].label);
            EXPECT_NEAR(got.classes[c].ap50, want.classes[c].ap50, 1e-12);
            EXPECT_NEAR(got.classes[c].ap50_95, want.classes[c].ap50_95, 1e-12);
            EXPECT_NEAR(got.classes[c].precision, want.classes[c].precision, 1e-12);
            EXPECT_NEAR(got.classes[c].recall, want.classes[c].recall, 1e-12);
        }
        EXPECT_NEAR(got.map50, want.map50, 1e-12);
        EXPECT_NEAR(got.map50_95, want.map50_95, 1e-12);
        EXPECT_LE(got.map50_95, got.map50 + 1e-12);
    }
}

TEST(MapSummary, PerfectAndEmpty) {
    ImageDetections img;
    img.gts = {det(ClassLabel::Puri, {0, 0, 10, 10}), det(ClassLabel::Coin, {20, 20, 8, 8})};
    img.preds = {det(ClassLabel::Puri, {0, 0, 10, 10}, 0.9), det(ClassLabel::Coin, {20, 20, 8, 8}, 0.7)};
    const auto perfect = map_summary({img}).box;
    EXPECT_EQ(perfect.classes.size(), 2u);
    for (double v : {perfect.precision, perfect.recall, perfect.map50, perfect.map50_95}) EXPECT_EQ(v, 1.0);

    img.preds.clear();
    const auto none = map_summary({img}).box;
    EXPECT_EQ(none.recall, 0.0);
    EXPECT_EQ(none.map50, 0.0);
}

TEST(MapSummary, MonotoneConfidenceInvariance) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        auto s = oracle::random_micro_scene(rng);
        const auto a = map_summary(s).box;
        for (auto& img : s)
            for (auto& p : img.preds) p.confidence = std::exp(3.0 * p.confidence) - 7.0;
        const auto b = map_summary(s).box;
        EXPECT_EQ(a.map50, b.map50);
        EXPECT_EQ(a.map50_95, b.map50_95);
    }
}

TEST(MapSummary, MaskVariantAndCutoff) {
    ImageDetections img;
    Detection g = det(ClassLabel::Beguni, {0, 0, 4, 4});
    g.mask = oracle::filled_rect(16, 16, 0, 0, 4, 4);
    Detection p = det(ClassLabel::Beguni, {0, 0, 4, 4}, 0.4);
    p.mask = oracle::filled_rect(16, 16, 0, 0, 4, 2);  // mask IoU 0.5, box IoU 1
    img.gts = {g};
    img.preds = {p};
    const auto r = map_summary({img});
    ASSERT_TRUE(r.mask.has_value());
    EXPECT_EQ(r.box.map50_95, 1.0);
    EXPECT_EQ(r.mask->map50, 1.0);
    EXPECT_NEAR(r.mask->map50_95, 0.1, 1e-12);
    const auto cut = map_summary({img}, MapOptions{0.5});
    EXPECT_EQ(cut.box.precision, 0.0);
    EXPECT_EQ(cut.box.recall, 0.0);
    EXPECT_EQ(cut.box.map50, 1.0);  // AP ignores the cutoff
    img.preds[0].mask.reset();
    EXPECT_FALSE(map_summary({img}).mask.has_value());
}

TEST(Confusion, Counts) {
    const std::vector<ClassLabel> t{ClassLabel::Puri, ClassLabel::Puri, ClassLabel::Coin};
    const std::vector<ClassLabel> p{ClassLabel::Puri, ClassLabel::Peaju, ClassLabel::Coin};
    const auto c = confusion_counts(t, p);
    EXPECT_EQ(c.counts[2][2], 1u);
    EXPECT_EQ(c.counts[2][3], 1u);
    EXPECT_EQ(c.counts[5][5], 1u);
    EXPECT_NE(format_table(c).find("Peaju"), std::string::npos);
    EXPECT_THROW(confusion_counts(t, std::vector<ClassLabel>{ClassLabel::Puri}), Error);
}

TEST(Manifest, JsonRoundTripAndLoading) {
    const auto dir = std::filesystem::temp_directory_path() / "foodcal_manifest_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_pgm(dir / "a.pgm", oracle::filled_rect(8, 6, 1, 1, 3, 2));
    Manifest m;
    ManifestImage img{"scene", 8, 6, {}};
    img.instances.push_back(ManifestInstance{ClassLabel::Somusa, 0.75, {1, 1, 3, 2}, "a.pgm", 123.25});
    img.instances.push_back(ManifestInstance{ClassLabel::Coin, std::nullopt, {1, 1, 3, 2}, "a.pgm"});
    m.images.push_back(img);
    write_manifest(dir / "m.json", m);
    const auto back = read_manifest(dir / "m.json");
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    EXPECT_EQ(back.images[0].instances[0].calories_kcal, 123.25);
    EXPECT_FALSE(back.images[0].instances[1].calories_kcal.has_value());
    const auto inst = load_instances(back.images[0], dir);
    ASSERT_EQ(inst.size(), 2u);
    EXPECT_EQ(inst[0].confidence, 0.75);
    EXPECT_EQ(inst[1].confidence, 1.0);
    EXPECT_EQ(inst[0].mask.count(), 6u);

    write_text_file(dir / "bad.json", R"({"images":[{"id":"x","width":8,"height":6,"instances":[{"class":"Pizza","bbox":[0,0,1,1],"mask":"a.pgm"}]}]})");
    EXPECT_THROW(read_manifest(dir / "bad.json"), Error);
    ManifestImage wrong{"scene", 9, 6, img.instances};
    EXPECT_THROW(load_instances(wrong, dir), Error);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace foodcal
