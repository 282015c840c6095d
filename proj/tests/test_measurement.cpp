#include "foodcal/error.hpp"
#include "foodcal/measurement.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace foodcal {
namespace {

DetectionInstance det(ClassLabel label, double conf, PixelBox box = {0, 0, 10, 10}) {
    DetectionInstance d;
    d.label = label;
    d.confidence = conf;
    d.bbox = box;
    d.mask = oracle::filled_rect(64, 64, box.x, box.y, box.w, box.h);
    return d;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected foodcal::Error";
    return ErrorCode::IoError;
}

TEST(SelectReference, PicksMostConfidentCoin) {
    std::vector<DetectionInstance> d{det(ClassLabel::Coin, 0.7), det(ClassLabel::Puri, 0.99), det(ClassLabel::Coin, 0.9)};
    EXPECT_EQ(&select_reference(d), &d[2]);
}

TEST(SelectReference, NoCoinIsAnError) {
    std::vector<DetectionInstance> d{det(ClassLabel::Puri, 0.99)};
    EXPECT_EQ(code_of([&] { select_reference(d); }), ErrorCode::NoReferenceObject);
}

TEST(SelectReference, SingleLowConfidenceCoinAndTies) {
    std::vector<DetectionInstance> d{det(ClassLabel::Beguni, 0.8), det(ClassLabel::Coin, 0.3)};
    EXPECT_EQ(&select_reference(d), &d[1]);
    std::vector<DetectionInstance> tie{det(ClassLabel::Coin, 0.5), det(ClassLabel::Coin, 0.5)};
    EXPECT_EQ(&select_reference(tie), &tie[0]);
}

TEST(ScaleFactor, HandValues) {
    EXPECT_NEAR(scale_factor(100, 100).s_f, 0.255, 1e-12);
    const auto s = scale_factor(50, 102);
    EXPECT_NEAR(s.s_h, 0.51, 1e-12);
    EXPECT_NEAR(s.s_w, 0.25, 1e-12);
    EXPECT_NEAR(s.s_f, 0.38, 1e-12);
    EXPECT_NEAR(scale_factor(1, 1).s_f, 25.5, 1e-12);
    EXPECT_EQ(s.s_f, (s.s_h + s.s_w) / 2.0);
}

TEST(ScaleFactor, RejectsNonPositive) {
    EXPECT_EQ(code_of([] { scale_factor(0, 10); }), ErrorCode::InvalidDimension);
    EXPECT_EQ(code_of([] { scale_factor(10, -1); }), ErrorCode::InvalidDimension);
}

TEST(ScaleFactor, DoublingPixelsHalvesScale) {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double h = rng.uniform(1, 500), w = rng.uniform(1, 500);
        EXPECT_EQ(scale_factor(2 * h, 2 * w).s_f, scale_factor(h, w).s_f / 2);
    }
}

TEST(ExtractFeatures, ScalesLinearAndAreaFeatures) {
    // 11x6 rectangle: contour area 10*5 = 50 px^2, perimeter 30 px.
    std::vector<DetectionInstance> d{det(ClassLabel::Coin, 0.9, {40, 40, 20, 20}),
                                     det(ClassLabel::Somusa, 0.8, {2, 3, 11, 6})};
    const auto r = extract_features(d, scale_factor(20, 20, 10.0));  // 0.5 mm/px
    ASSERT_EQ(r.records.size(), 1u);
    const auto& f = r.records[0];
    EXPECT_EQ(f.label, ClassLabel::Somusa);
    EXPECT_DOUBLE_EQ(f.height_mm, 3.0);
    EXPECT_DOUBLE_EQ(f.width_mm, 5.5);
    EXPECT_DOUBLE_EQ(f.area_mm2, 12.5);
    EXPECT_DOUBLE_EQ(f.perimeter_mm, 15.0);
    EXPECT_FALSE(f.calories_kcal.has_value());
    EXPECT_EQ(r.source_index[0], 1u);
}

TEST(ExtractFeatures, AreaOfThousandPixelsAtHalfMillimetre) {
    // 41x26 rectangle has contour area 40*25 = 1000 px^2.
    std::vector<DetectionInstance> d{det(ClassLabel::Puri, 1.0, {0, 0, 41, 26})};
    ScaleFactor s{0.5, 0.5, 0.5};
    EXPECT_DOUBLE_EQ(extract_features(d, s).records[0].area_mm2, 250.0);
    std::vector<DetectionInstance> tall{det(ClassLabel::Puri, 1.0, {0, 0, 5, 100})};
    DetectionInstance big = tall[0];
    big.mask = oracle::filled_rect(8, 120, 0, 0, 5, 100);
    EXPECT_DOUBLE_EQ(extract_features({big}, ScaleFactor{0.2, 0.2, 0.2}).records[0].height_mm, 20.0);
}

TEST(ExtractFeatures, CoinOnlyGivesNothing) {
    std::vector<DetectionInstance> d{det(ClassLabel::Coin, 0.9)};
    EXPECT_TRUE(extract_features(d, scale_factor(10, 10)).records.empty());
}

TEST(ExtractFeatures, EmptyMaskIsSkippedAndReported) {
    auto empty = det(ClassLabel::Peaju, 0.9);
    empty.mask = BinaryMask(64, 64);
    std::vector<DetectionInstance> d{det(ClassLabel::Coin, 0.9), empty, det(ClassLabel::Beguni, 0.5)};
    const auto r = extract_features(d, scale_factor(10, 10));
    ASSERT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.skipped.size(), 1u);
    EXPECT_EQ(r.skipped[0].index, 1u);
}

TEST(ExtractFeatures, InvariantUnderGlobalRescale) {
    // Scaling pixel measurements and the coin by k leaves millimetre output unchanged.
    Rng rng(17);
    for (int t = 0; t < 50; ++t) {
        const int w = static_cast<int>(rng.uniform_int(3, 20));
        const int h = static_cast<int>(rng.uniform_int(3, 20));
        const int coin = static_cast<int>(rng.uniform_int(5, 20));
        const int k = static_cast<int>(rng.uniform_int(2, 4));
        auto food_at = [&](int scale) {
            DetectionInstance d;
            d.label = ClassLabel::Beguni;
            // Same rectangle in a k-times larger image: pixel extents scale by k.
            d.mask = oracle::filled_rect(100, 100, 0, 0, (w - 1) * scale + 1, (h - 1) * scale + 1);
            return d;
        };
        const auto a = extract_features({food_at(1)}, scale_factor(coin, coin)).records[0];
        const auto b = extract_features({food_at(k)}, scale_factor(double(coin) * k, double(coin) * k)).records[0];
        EXPECT_NEAR(a.area_mm2, b.area_mm2, 1e-9 * a.area_mm2);
        EXPECT_NEAR(a.perimeter_mm, b.perimeter_mm, 1e-9 * a.perimeter_mm);
    }
}

TEST(ExtractFeatures, AreaQuadraticLinearFeaturesLinear) {
    Rng rng(23);
    std::vector<DetectionInstance> d{det(ClassLabel::Singara, 1.0, {1, 1, 13, 9})};
    for (int t = 0; t < 50; ++t) {
        const double s = rng.uniform(0.05, 2.0);
        const auto one = extract_features(d, ScaleFactor{1, 1, 1}).records[0];
        const auto r = extract_features(d, ScaleFactor{s, s, s}).records[0];
        EXPECT_NEAR(r.area_mm2, one.area_mm2 * s * s, 1e-9);
        EXPECT_NEAR(r.height_mm, one.height_mm * s, 1e-12);
        EXPECT_NEAR(r.width_mm, one.width_mm * s, 1e-12);
        EXPECT_NEAR(r.perimeter_mm, one.perimeter_mm * s, 1e-12);
    }
}

TEST(CalorieLabel, TableValues) {
    const auto table = CalorieDensityTable::defaults();
    EXPECT_NEAR(calorie_label(100, ClassLabel::Singara, table), 261.0, 1e-9);
    EXPECT_NEAR(calorie_label(50, ClassLabel::Peaju, table), 59.0, 1e-9);
    EXPECT_EQ(calorie_label(0, ClassLabel::Beguni, table), 0.0);
    EXPECT_DOUBLE_EQ(table.density(ClassLabel::Somusa), 2.11);
    EXPECT_DOUBLE_EQ(table.density(ClassLabel::Puri), 2.44);
    EXPECT_DOUBLE_EQ(table.density(ClassLabel::Beguni), 1.48);
    EXPECT_EQ(code_of([&] { calorie_label(10, ClassLabel::Coin, table); }), ErrorCode::UnknownDensity);
}

TEST(CalorieLabel, LinearInWeight) {
    const auto table = CalorieDensityTable::defaults();
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const double w = rng.uniform(0, 500);
        for (auto c : kFoodClasses) EXPECT_EQ(calorie_label(2 * w, c, table), 2 * calorie_label(w, c, table));
    }
}

TEST(DensityTable, LoadsCsvAndRejectsIncomplete) {
    const auto path = std::filesystem::temp_directory_path() / "foodcal_density.csv";
    {
        std::ofstream out(path);
        out << "class,kcal_per_gram\nSingara,3.0\nSomusa,2.11\nPuri,2.44\nPeaju,1.18\nBeguni,1.48\n";
    }
    EXPECT_DOUBLE_EQ(CalorieDensityTable::load_csv(path).density(ClassLabel::Singara), 3.0);
    {
        std::ofstream out(path);
        out << "class,kcal_per_gram\nSingara,3.0\n";
    }
    EXPECT_EQ(code_of([&] { CalorieDensityTable::load_csv(path); }), ErrorCode::ParseError);
    std::filesystem::remove(path);
}

TEST(ClassLabel, NamesRoundTrip) {
    for (int i = 0; i < 6; ++i) {
        const auto c = static_cast<ClassLabel>(i);
        EXPECT_EQ(parse_class(class_name(c)), c);
    }
    EXPECT_EQ(code_of([] { parse_class("Pizza"); }), ErrorCode::ParseError);
}

}  // namespace
}  // namespace foodcal
