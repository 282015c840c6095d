#include "foodcal/error.hpp"
#include "foodcal/regress.hpp"
#include "foodcal/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace foodcal {
namespace {

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t p, double noise = 0.1) {
    Dataset d;
    d.n_features = p;
    std::vector<double> row(p);
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            row[j] = rng.uniform();
            y += (static_cast<double>(j) + 1.0) * row[j];
        }
        y += 3.0 * std::sin(6.0 * row[0]) + noise * rng.normal();
        d.add(row, y);
    }
    return d;
}

// Gauss-Jordan with partial pivoting on the augmented normal equations of
// [1 | X]; independent of the centered Eigen solve in the library.
std::vector<double> ols_oracle(const Dataset& d) {
    const std::size_t q = d.n_features + 1;
    std::vector<std::vector<double>> a(q, std::vector<double>(q + 1, 0.0));
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::vector<double> z{1.0};
        for (double v : d.row(i)) z.push_back(v);
        for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t c = 0; c < q; ++c) a[r][c] += z[r] * z[c];
            a[r][q] += z[r] * d.y[i];
        }
    }
    for (std::size_t c = 0; c < q; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < q; ++r) {
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        }
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < q; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k <= q; ++k) a[r][k] -= f * a[c][k];
        }
    }
    std::vector<double> beta(q);
    for (std::size_t r = 0; r < q; ++r) beta[r] = a[r][q] / a[r][r];
    return beta;  // intercept first
}

// Direct two-pass SSE for every candidate split.
struct OracleSplit {
    std::size_t feature;
    double threshold;
    double gain;
};
std::optional<OracleSplit> split_oracle(const Dataset& d, const std::vector<std::size_t>& rows) {
    auto sse = [&](const std::vector<double>& ys) {
        if (ys.empty()) return 0.0;
        const double m = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        double s = 0.0;
        for (double y : ys) s += (y - m) * (y - m);
        return s;
    };
    std::vector<double> all;
    for (auto r : rows) all.push_back(d.y[r]);
    const double parent = sse(all);
    std::optional<OracleSplit> best;
    for (std::size_t f = 0; f < d.n_features; ++f) {
        std::vector<double> vals;
        for (auto r : rows) vals.push_back(d.row(r)[f]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            const double t = (vals[i] + vals[i + 1]) / 2.0;
            std::vector<double> l, r;
            for (auto row : rows) (d.row(row)[f] <= t ? l : r).push_back(d.y[row]);
            const double gain = parent - sse(l) - sse(r);
            if (gain > 1e-12 && (!best || gain > best->gain + 1e-9)) best = OracleSplit{f, t, gain};
        }
    }
    return best;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

const Algorithm kAll[] = {Algorithm::Linear, Algorithm::Knn,    Algorithm::DTree,
                          Algorithm::RForest, Algorithm::GBoost, Algorithm::AdaBoost};

TEST(Linear, RecoversExactLine) {
    Dataset d;
    d.n_features = 1;
    for (double x : {0.0, 0.5, 1.0, 2.0, 3.5, 7.0}) d.add(std::vector<double>{x}, 2.0 * x + 1.0);
    const auto m = fit(ModelSpec::defaults(Algorithm::Linear), d);
    EXPECT_NEAR(m.coef[0], 2.0, 1e-9);
    EXPECT_NEAR(m.intercept, 1.0, 1e-9);
}

TEST(Linear, MatchesGaussJordanOracle) {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        const auto d = random_dataset(rng, 60, 4);
        const auto m = fit(ModelSpec::defaults(Algorithm::Linear), d);
        const auto beta = ols_oracle(d);
        EXPECT_NEAR(m.intercept, beta[0], 1e-8);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m.coef[j], beta[j + 1], 1e-8);
    }
}

TEST(Linear, RidgeFallbackOnCollinearOneHot) {
    // Three one-hot columns sum to 1, collinear with the intercept.
    Rng rng(12);
    Dataset d, reduced;
    d.n_features = 4;
    reduced.n_features = 3;
    for (int i = 0; i < 90; ++i) {
        const int c = i % 3;
        const double x = rng.uniform();
        const double y = 10.0 * c + 4.0 * x + 0.1 * rng.normal();
        d.add(std::vector<double>{c == 0 ? 1.0 : 0.0, c == 1 ? 1.0 : 0.0, c == 2 ? 1.0 : 0.0, x}, y);
        reduced.add(std::vector<double>{c == 1 ? 1.0 : 0.0, c == 2 ? 1.0 : 0.0, x}, y);
    }
    const auto m = fit(ModelSpec::defaults(Algorithm::Linear), d);
    const auto beta = ols_oracle(reduced);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto r = reduced.row(i);
        const double expect = beta[0] + beta[1] * r[0] + beta[2] * r[1] + beta[3] * r[2];
        EXPECT_NEAR(m.predict(d.row(i)), expect, 1e-6);
    }
}

TEST(Knn, SingleRowPredictsItsTarget) {
    Dataset d;
    d.n_features = 2;
    d.add(std::vector<double>{0.3, 0.7}, 42.0);
    auto spec = ModelSpec::defaults(Algorithm::Knn);
    spec.k = 1;
    const auto m = fit(spec, d);
    EXPECT_EQ(m.predict(std::vector<double>{0.3, 0.7}), 42.0);
    EXPECT_EQ(m.predict(std::vector<double>{-5.0, 9.0}), 42.0);
    spec.k = 5;  // k larger than the training set uses every row
    EXPECT_EQ(fit(spec, d).predict(std::vector<double>{1.0, 1.0}), 42.0);
}

TEST(Knn, MatchesBruteForce) {
    Rng rng(13);
    const auto d = random_dataset(rng, 80, 3);
    const auto m = fit(ModelSpec::defaults(Algorithm::Knn), d);
    for (int q = 0; q < 50; ++q) {
        const std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform()};
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < d.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 3; ++j) s += std::pow(d.row(i)[j] - x[j], 2);
            all.emplace_back(std::sqrt(s), i);
        }
        std::sort(all.begin(), all.end());
        double expect = 0.0;
        for (int i = 0; i < 5; ++i) expect += d.y[all[i].second] / 5.0;
        EXPECT_NEAR(m.predict(x), expect, 1e-12);
    }
}

TEST(Knn, DistanceTiesGoToLowerIndex) {
    Dataset d;
    d.n_features = 1;
    for (double y : {1.0, 2.0, 3.0}) d.add(std::vector<double>{0.0}, y);
    auto spec = ModelSpec::defaults(Algorithm::Knn);
    spec.k = 2;
    EXPECT_EQ(fit(spec, d).predict(std::vector<double>{0.0}), 1.5);
}

TEST(CartSplit, HandExamples) {
    Dataset d;
    d.n_features = 1;
    d.add(std::vector<double>{0.0}, 0.0);
    d.add(std::vector<double>{1.0}, 10.0);
    const auto rows = iota(2);
    const std::vector<std::size_t> f0{0};
    const auto s = cart_best_split(d, rows, f0);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->feature, 0u);
    EXPECT_EQ(s->threshold, 0.5);
    EXPECT_DOUBLE_EQ(s->gain, 50.0);

    Dataset flat;
    flat.n_features = 1;
    for (int i = 0; i < 4; ++i) flat.add(std::vector<double>{double(i)}, 3.0);
    EXPECT_FALSE(cart_best_split(flat, iota(4), f0));
}

TEST(CartSplit, TieGoesToLowerFeature) {
    Dataset d;
    d.n_features = 2;
    d.add(std::vector<double>{0.0, 0.0}, 0.0);
    d.add(std::vector<double>{1.0, 1.0}, 10.0);
    const std::vector<std::size_t> both{0, 1};
    EXPECT_EQ(cart_best_split(d, iota(2), both)->feature, 0u);
    // Same gain at two thresholds of one feature: lowest threshold wins.
    Dataset sym;
    sym.n_features = 1;
    for (double x : {0.0, 1.0, 2.0, 3.0}) sym.add(std::vector<double>{x}, x == 0.0 || x == 3.0 ? 1.0 : 0.0);
    const std::vector<std::size_t> f0{0};
    EXPECT_EQ(cart_best_split(sym, iota(4), f0)->threshold, 0.5);
}

TEST(CartSplit, MatchesExhaustiveOracle) {
    Rng rng(14);
    for (int t = 0; t < 100; ++t) {
        const auto d = random_dataset(rng, 5 + t % 30, 3, 1.0);
        const auto rows = iota(d.size());
        const auto feats = iota(3);
        const auto got = cart_best_split(d, rows, feats);
        const auto want = split_oracle(d, rows);
        ASSERT_EQ(got.has_value(), want.has_value());
        if (!want) continue;
        EXPECT_EQ(got->feature, want->feature);
        EXPECT_EQ(got->threshold, want->threshold);
        EXPECT_NEAR(got->gain, want->gain, 1e-9 * std::max(1.0, want->gain));
    }
}

TEST(CartSplit, WeightsActLikeDuplicates) {
    Rng rng(15);
    const auto d = random_dataset(rng, 20, 2, 1.0);
    Dataset dup;
    dup.n_features = 2;
    std::vector<double> w(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        w[i] = static_cast<double>(1 + i % 3);
        for (int k = 0; k < static_cast<int>(w[i]); ++k) dup.add(d.row(i), d.y[i]);
    }
    const auto feats = iota(2);
    const auto a = cart_best_split(d, iota(d.size()), feats, w);
    const auto b = cart_best_split(dup, iota(dup.size()), feats);
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->feature, b->feature);
    EXPECT_EQ(a->threshold, b->threshold);
    EXPECT_NEAR(a->gain, b->gain, 1e-9 * b->gain);
}

TEST(DTree, TwoValuesGiveExactLeaves) {
    Dataset d;
    d.n_features = 1;
    for (double y : {1.0, 2.0, 3.0}) d.add(std::vector<double>{0.0}, y);
    for (double y : {10.0, 20.0}) d.add(std::vector<double>{4.0}, y);
    const auto m = fit(ModelSpec::defaults(Algorithm::DTree), d);
    const auto& root = m.trees[0].nodes[0];
    EXPECT_EQ(root.feature, 0);
    EXPECT_EQ(root.threshold, 2.0);
    EXPECT_EQ(m.predict(std::vector<double>{0.0}), 2.0);
    EXPECT_EQ(m.predict(std::vector<double>{4.0}), 15.0);
}

TEST(DTree, UnlimitedDepthInterpolatesDistinctRows) {
    Rng rng(16);
    const auto d = random_dataset(rng, 200, 4, 2.0);
    const auto m = fit(ModelSpec::defaults(Algorithm::DTree), d);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(m.predict(d.row(i)), d.y[i]);

    // XOR: no single split reduces variance, but the tree must still separate.
    Dataset x;
    x.n_features = 2;
    x.add(std::vector<double>{0, 0}, 0);
    x.add(std::vector<double>{1, 1}, 0);
    x.add(std::vector<double>{0, 1}, 1);
    x.add(std::vector<double>{1, 0}, 1);
    const auto feats = iota(2);
    EXPECT_FALSE(cart_best_split(x, iota(4), feats));
    const auto mx = fit(ModelSpec::defaults(Algorithm::DTree), x);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(mx.predict(x.row(i)), x.y[i]);
}

TEST(DTree, DepthLimitHolds) {
    Rng rng(17);
    const auto d = random_dataset(rng, 300, 3);
    for (int depth = 1; depth <= 5; ++depth) {
        auto spec = ModelSpec::defaults(Algorithm::DTree);
        spec.max_depth = depth;
        EXPECT_EQ(fit(spec, d).trees[0].depth(), depth);
    }
}

TEST(RForest, IdenticalTreesAverageToOne) {
    Rng rng(18);
    const auto d = random_dataset(rng, 50, 3);
    const auto single = fit(ModelSpec::defaults(Algorithm::DTree), d);
    Regressor forest = single;
    forest.spec = ModelSpec::defaults(Algorithm::RForest);
    forest.trees.assign(4, single.trees[0]);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(forest.predict(d.row(i)), single.predict(d.row(i)));
}

TEST(RForest, ThreadCountInvariant) {
    Rng rng(19);
    const auto d = random_dataset(rng, 150, 9);
    auto spec = ModelSpec::defaults(Algorithm::RForest, 77);
    spec.n_estimators = 30;
    const auto a = fit(spec, d, 1), b = fit(spec, d, 8), c = fit(spec, d, 3);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(to_json(a).dump(), to_json(c).dump());
    spec.seed = 78;
    EXPECT_NE(to_json(a).dump(), to_json(fit(spec, d, 1)).dump());
}

TEST(RForest, UsesFeatureSubsets) {
    Rng rng(20);
    const auto d = random_dataset(rng, 150, 9);
    auto spec = ModelSpec::defaults(Algorithm::RForest, 1);
    spec.n_estimators = 20;
    const auto m = fit(spec, d);
    std::vector<int> used(9, 0);
    for (const auto& t : m.trees)
        for (const auto& n : t.nodes)
            if (n.feature >= 0) used[n.feature] = 1;
    // Without subsetting the weakest features would rarely be chosen at all.
    EXPECT_EQ(std::accumulate(used.begin(), used.end(), 0), 9);
}

TEST(GBoost, ZeroRoundsPredictsMean) {
    Dataset d;
    d.n_features = 1;
    for (double y : {1.0, 2.0, 6.0}) d.add(std::vector<double>{y}, y);
    auto spec = ModelSpec::defaults(Algorithm::GBoost);
    spec.n_estimators = 0;
    EXPECT_EQ(fit(spec, d).predict(std::vector<double>{100.0}), 3.0);
}

TEST(GBoost, TrainingErrorFallsWithRounds) {
    Rng rng(21);
    const auto d = random_dataset(rng, 200, 3);
    double prev = 1e300;
    for (int rounds : {1, 10, 50, 100}) {
        auto spec = ModelSpec::defaults(Algorithm::GBoost);
        spec.n_estimators = rounds;
        const auto m = fit(spec, d);
        double mse = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) mse += std::pow(m.predict(d.row(i)) - d.y[i], 2);
        EXPECT_LT(mse, prev);
        prev = mse;
    }
}

TEST(AdaBoost, SingleLearnerPassesThrough) {
    Rng rng(22);
    const auto d = random_dataset(rng, 100, 3);
    auto spec = ModelSpec::defaults(Algorithm::AdaBoost);
    spec.n_estimators = 1;
    const auto m = fit(spec, d);
    ASSERT_EQ(m.trees.size(), 1u);
    auto dt = ModelSpec::defaults(Algorithm::DTree);
    dt.max_depth = 3;
    const auto tree = fit(dt, d);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(m.predict(d.row(i)), m.trees[0].predict(d.row(i)));
        EXPECT_NEAR(m.predict(d.row(i)), tree.predict(d.row(i)), 1e-9);
    }
}

TEST(AdaBoost, WeightsArePositiveAndBounded) {
    Rng rng(23);
    const auto d = random_dataset(rng, 200, 3);
    const auto m = fit(ModelSpec::defaults(Algorithm::AdaBoost), d);
    EXPECT_GE(m.trees.size(), 2u);
    EXPECT_LE(m.trees.size(), 50u);
    for (double w : m.tree_weights) EXPECT_GT(w, 0.0);
}

TEST(WeightedMedian, Examples) {
    const std::vector<double> v{1, 2, 3};
    EXPECT_EQ(weighted_median(v, std::vector<double>{1, 1, 1}), 2.0);
    EXPECT_EQ(weighted_median(v, std::vector<double>{0.1, 0.1, 0.8}), 3.0);
    EXPECT_EQ(weighted_median(std::vector<double>{7.5}, std::vector<double>{0.3}), 7.5);
    EXPECT_EQ(weighted_median(std::vector<double>{3, 1, 2}, std::vector<double>{1, 1, 1}), 2.0);
    // Exactly half reached at the first value.
    EXPECT_EQ(weighted_median(std::vector<double>{1, 2}, std::vector<double>{1, 1}), 1.0);
    try {
        weighted_median(v, std::vector<double>{0, 0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroTotalWeight);
    }
}

TEST(AllModels, TranslationConsistentTargets) {
    Rng rng(24);
    const auto d = random_dataset(rng, 120, 4);
    Dataset shifted = d;
    const double c = 1000.0;
    for (auto& y : shifted.y) y += c;
    for (auto a : kAll) {
        auto spec = ModelSpec::defaults(a, 5);
        if (a == Algorithm::RForest) spec.n_estimators = 20;
        const auto m0 = fit(spec, d), m1 = fit(spec, shifted);
        if (m0.trees.size() == m1.trees.size()) {
            for (std::size_t t = 0; t < m0.trees.size() && a != Algorithm::GBoost; ++t) {
                ASSERT_EQ(m0.trees[t].nodes.size(), m1.trees[t].nodes.size()) << algorithm_name(a);
                for (std::size_t k = 0; k < m0.trees[t].nodes.size(); ++k) {
                    EXPECT_EQ(m0.trees[t].nodes[k].feature, m1.trees[t].nodes[k].feature);
                    EXPECT_EQ(m0.trees[t].nodes[k].threshold, m1.trees[t].nodes[k].threshold);
                }
            }
        } else {
            ADD_FAILURE() << algorithm_name(a) << " tree count changed under translation";
        }
        for (int q = 0; q < 40; ++q) {
            const std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
            EXPECT_NEAR(m1.predict(x), m0.predict(x) + c, 1e-9 * c) << algorithm_name(a);
        }
    }
}

TEST(AllModels, JsonRoundTripIsBitIdentical) {
    Rng rng(25);
    const auto d = random_dataset(rng, 100, 9);
    for (auto a : kAll) {
        auto spec = ModelSpec::defaults(a, 9);
        if (a == Algorithm::RForest) spec.n_estimators = 10;
        const auto m = fit(spec, d);
        const auto text = to_json(m).dump();
        const auto back = regressor_from_json(nlohmann::json::parse(text));
        EXPECT_EQ(to_json(back).dump(), text);
        for (int q = 0; q < 30; ++q) {
            std::vector<double> x(9);
            for (auto& v : x) v = rng.uniform(-0.2, 1.2);
            EXPECT_EQ(back.predict(x), m.predict(x)) << algorithm_name(a);
        }
    }
}

TEST(AllModels, Errors) {
    Dataset empty;
    empty.n_features = 3;
    EXPECT_THROW(fit(ModelSpec::defaults(Algorithm::Linear), empty), Error);
    Rng rng(26);
    const auto d = random_dataset(rng, 20, 3);
    for (auto a : kAll) {
        const auto m = fit(ModelSpec::defaults(a), d);
        try {
            m.predict(std::vector<double>{1.0, 2.0});
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
        }
    }
    auto bad = ModelSpec::defaults(Algorithm::Knn);
    bad.k = 0;
    EXPECT_THROW(fit(bad, d), Error);
    EXPECT_THROW(regressor_from_json(nlohmann::json::parse(R"({"format":"foodcal.model","version":2})")), Error);
    EXPECT_THROW(parse_algorithm("svm"), Error);
    EXPECT_EQ(parse_algorithm("rf"), Algorithm::RForest);
    EXPECT_EQ(parse_algorithm("ada"), Algorithm::AdaBoost);
}

TEST(AllModels, NonlinearTargetFavorsForest) {
    Rng rng(27);
    const auto train = random_dataset(rng, 400, 3, 0.05);
    const auto test = random_dataset(rng, 200, 3, 0.0);
    auto mae = [&](const Regressor& m) {
        double s = 0.0;
        for (std::size_t i = 0; i < test.size(); ++i) s += std::abs(m.predict(test.row(i)) - test.y[i]);
        return s / static_cast<double>(test.size());
    };
    const double lr = mae(fit(ModelSpec::defaults(Algorithm::Linear), train));
    const double rf = mae(fit(ModelSpec::defaults(Algorithm::RForest, 3), train));
    const double gb = mae(fit(ModelSpec::defaults(Algorithm::GBoost), train));
    EXPECT_LT(rf, lr);
    EXPECT_LT(gb, lr);
}

}  // namespace
}  // namespace foodcal
