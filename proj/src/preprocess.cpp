#include "foodcal/preprocess.hpp"

#include "foodcal/error.hpp"
#include "foodcal/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace foodcal {

std::array<double, kNumFoodClasses> one_hot(ClassLabel label) {
    if (!is_food(label)) throw Error(ErrorCode::CoinNotEncodable, "Coin is not a regression class");
    std::array<double, kNumFoodClasses> v{};
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

std::array<double, kNumNumericFeatures> numeric_features(const FeatureRecord& r) {
    return {r.height_mm, r.width_mm, r.area_mm2, r.perimeter_mm};
}

FeatureVector feature_vector(const FeatureRecord& r) {
    FeatureVector f{};
    const auto oh = one_hot(r.label);
    const auto num = numeric_features(r);
    std::copy(oh.begin(), oh.end(), f.begin());
    std::copy(num.begin(), num.end(), f.begin() + kNumFoodClasses);
    return f;
}

namespace {

double target_of(const FeatureRecord& r) {
    if (!r.calories_kcal) throw Error(ErrorCode::ParseError, "record has no calorie target");
    return *r.calories_kcal;
}

}  // namespace

Dataset to_dataset(const std::vector<FeatureRecord>& rows) {
    Dataset d;
    d.n_features = kNumFeatures;
    d.x.reserve(rows.size() * kNumFeatures);
    for (const auto& r : rows) {
        const auto f = feature_vector(r);
        d.add(f, target_of(r));
    }
    return d;
}

NormalizationParams minmax_fit(const std::vector<FeatureRecord>& train) {
    if (train.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit min-max on an empty training set");
    NormalizationParams p;
    p.min = p.max = numeric_features(train.front());
    for (const auto& r : train) {
        const auto f = numeric_features(r);
        for (std::size_t k = 0; k < kNumNumericFeatures; ++k) {
            p.min[k] = std::min(p.min[k], f[k]);
            p.max[k] = std::max(p.max[k], f[k]);
        }
    }
    return p;
}

namespace {

double scale_one(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }

}  // namespace

std::vector<FeatureRecord> minmax_apply(const NormalizationParams& params, const std::vector<FeatureRecord>& rows) {
    std::vector<FeatureRecord> out = rows;
    for (auto& r : out) {
        r.height_mm = scale_one(r.height_mm, params.min[0], params.max[0]);
        r.width_mm = scale_one(r.width_mm, params.min[1], params.max[1]);
        r.area_mm2 = scale_one(r.area_mm2, params.min[2], params.max[2]);
        r.perimeter_mm = scale_one(r.perimeter_mm, params.min[3], params.max[3]);
    }
    return out;
}

FeatureVector minmax_apply(const NormalizationParams& params, const FeatureVector& features) {
    FeatureVector out = features;
    for (std::size_t k = 0; k < kNumNumericFeatures; ++k) {
        out[kNumFoodClasses + k] = scale_one(features[kNumFoodClasses + k], params.min[k], params.max[k]);
    }
    return out;
}

NormalizedSet minmax_fit_apply(const std::vector<FeatureRecord>& train) {
    NormalizedSet s;
    s.params = minmax_fit(train);
    s.rows = minmax_apply(s.params, train);
    return s;
}

std::vector<FeatureRecord> zscore_filter(const std::vector<FeatureRecord>& rows, double threshold) {
    if (rows.size() < 2) throw Error(ErrorCode::TooFewRows, "z-score filtering needs at least two rows");
    constexpr std::size_t kCols = kNumNumericFeatures + 1;
    auto column = [](const FeatureRecord& r, std::size_t k) {
        if (k < kNumNumericFeatures) return numeric_features(r)[k];
        return target_of(r);
    };
    std::array<double, kCols> mean{}, stddev{};
    const double n = static_cast<double>(rows.size());
    for (std::size_t k = 0; k < kCols; ++k) {
        double s = 0.0;
        for (const auto& r : rows) s += column(r, k);
        mean[k] = s / n;
        double ss = 0.0;
        for (const auto& r : rows) {
            const double d = column(r, k) - mean[k];
            ss += d * d;
        }
        stddev[k] = std::sqrt(ss / n);
    }
    std::vector<FeatureRecord> kept;
    for (const auto& r : rows) {
        bool outlier = false;
        for (std::size_t k = 0; k < kCols && !outlier; ++k) {
            if (stddev[k] == 0.0) continue;
            outlier = std::abs(column(r, k) - mean[k]) / stddev[k] > threshold;
        }
        if (!outlier) kept.push_back(r);
    }
    return kept;
}

Partition<std::size_t> split_indices(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
    const double total = f.train + f.valid + f.test;
    if (f.train < 0 || f.valid < 0 || f.test < 0 || std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidDimension, "split fractions must be non-negative and sum to 1");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    // The epsilon absorbs representation error such as 10 * 0.1.
    const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.valid + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.test + 1e-9));
    const std::size_t n_train = n - n_valid - n_test;
    Partition<std::size_t> p;
    p.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    p.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    p.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), order.end());
    return p;
}

Partition<FeatureRecord> split(const std::vector<FeatureRecord>& rows, const SplitFractions& fractions,
                               std::uint64_t seed) {
    const auto idx = split_indices(rows.size(), fractions, seed);
    Partition<FeatureRecord> p;
    for (auto i : idx.train) p.train.push_back(rows[i]);
    for (auto i : idx.valid) p.valid.push_back(rows[i]);
    for (auto i : idx.test) p.test.push_back(rows[i]);
    return p;
}

PixelBox augment_box(const PixelBox& b, int image_width, int /*image_height*/, Augmentation mode) {
    switch (mode) {
        case Augmentation::HFlip: return {image_width - b.x - b.w, b.y, b.w, b.h};
        case Augmentation::Rot90: return {b.y, image_width - b.x - b.w, b.h, b.w};
    }
    return b;
}

AugmentedMask augment(const BinaryMask& mask, const std::vector<PixelBox>& boxes, Augmentation mode) {
    const int w = mask.width(), h = mask.height();
    AugmentedMask out{mode == Augmentation::HFlip ? BinaryMask(w, h) : BinaryMask(h, w), {}};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            if (mode == Augmentation::HFlip) {
                out.mask.set(w - 1 - x, y);
            } else {
                out.mask.set(y, w - 1 - x);
            }
        }
    }
    for (const auto& b : boxes) out.boxes.push_back(augment_box(b, w, h, mode));
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int target_width, int target_height) {
    if (target_width < 1 || target_height < 1) throw Error(ErrorCode::InvalidDimension, "resize target must be positive");
    BinaryMask out(target_width, target_height);
    for (int y = 0; y < target_height; ++y) {
        const int sy = static_cast<int>(static_cast<long long>(y) * mask.height() / target_height);
        for (int x = 0; x < target_width; ++x) {
            const int sx = static_cast<int>(static_cast<long long>(x) * mask.width() / target_width);
            if (mask.at(sx, sy)) out.set(x, y);
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& field) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    if (b < e && *b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, "not a finite number: '" + field + "'");
    }
    return v;
}

std::string dataset_csv(const std::vector<FeatureRecord>& rows) {
    std::string out = kDatasetCsvHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += class_name(r.label);
        for (double v : {r.height_mm, r.width_mm, r.area_mm2, r.perimeter_mm}) {
            out += ',';
            out += format_double(v);
        }
        out += ',';
        if (r.calories_kcal) out += format_double(*r.calories_kcal);
        out += '\n';
    }
    return out;
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<FeatureRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << dataset_csv(rows);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<FeatureRecord> read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line != kDatasetCsvHeader) {
        throw Error(ErrorCode::ParseError, path.string() + ": expected header '" + std::string(kDatasetCsvHeader) + "'");
    }
    std::vector<FeatureRecord> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        if (fields.size() != 6) throw Error(ErrorCode::ParseError, where + "expected 6 fields");
        try {
            FeatureRecord r;
            r.label = parse_class(fields[0]);
            if (!is_food(r.label)) throw Error(ErrorCode::CoinNotEncodable, "Coin rows are not regression records");
            r.height_mm = parse_double(fields[1]);
            r.width_mm = parse_double(fields[2]);
            r.area_mm2 = parse_double(fields[3]);
            r.perimeter_mm = parse_double(fields[4]);
            if (!fields[5].empty()) r.calories_kcal = parse_double(fields[5]);
            rows.push_back(r);
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, where + e.what());
        }
    }
    return rows;
}

}  // namespace foodcal
