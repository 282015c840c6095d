#include "foodcal/synth.hpp"

#include "foodcal/error.hpp"
#include "json_field.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace foodcal {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kOutlineVertices = 512;

struct Vec2 {
    double x;
    double y;
};
using Polygon = std::vector<Vec2>;

double polygon_area(const Polygon& p) {
    double s = 0.0;
    for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) s += p[j].x * p[i].y - p[i].x * p[j].y;
    return std::abs(s) * 0.5;
}

double polygon_length(const Polygon& p) {
    double s = 0.0;
    for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) s += std::hypot(p[i].x - p[j].x, p[i].y - p[j].y);
    return s;
}

RealBox polygon_extent(const Polygon& p) {
    double x0 = p[0].x, x1 = p[0].x, y0 = p[0].y, y1 = p[0].y;
    for (const auto& v : p) {
        x0 = std::min(x0, v.x);
        x1 = std::max(x1, v.x);
        y0 = std::min(y0, v.y);
        y1 = std::max(y1, v.y);
    }
    return RealBox{x0, y0, x1 - x0, y1 - y0};
}

// Points spread along a closed polyline by arc length, corners included.
Polygon resample_closed(const std::vector<Vec2>& corners, int n) {
    std::vector<double> len;
    double total = 0.0;
    for (std::size_t i = 0; i < corners.size(); ++i) {
        const auto& a = corners[i];
        const auto& b = corners[(i + 1) % corners.size()];
        len.push_back(std::hypot(b.x - a.x, b.y - a.y));
        total += len.back();
    }
    Polygon out;
    for (std::size_t i = 0; i < corners.size(); ++i) {
        const auto& a = corners[i];
        const auto& b = corners[(i + 1) % corners.size()];
        const int k = std::max(1, static_cast<int>(std::lround(n * len[i] / total)));
        for (int s = 0; s < k; ++s) {
            const double t = static_cast<double>(s) / k;
            out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    return out;
}

// Un-jittered outline in millimetres, centred on the origin (centroid for the
// triangle).
Polygon base_outline(ShapeFamily family, double length, double aspect) {
    const double a = 0.5 * length;
    const double b = 0.5 * length * aspect;
    switch (family) {
        case ShapeFamily::Ellipse: {
            Polygon p;
            for (int k = 0; k < kOutlineVertices; ++k) {
                const double t = 2.0 * kPi * k / kOutlineVertices;
                p.push_back({a * std::cos(t), b * std::sin(t)});
            }
            return p;
        }
        case ShapeFamily::Rectangle:
            return resample_closed({{-a, -b}, {a, -b}, {a, b}, {-a, b}}, kOutlineVertices);
        case ShapeFamily::Triangle: {
            const double h = length * aspect;
            return resample_closed({{-a, h / 3.0}, {0.0, -2.0 * h / 3.0}, {a, h / 3.0}}, kOutlineVertices);
        }
    }
    return {};
}

double analytic_area(ShapeFamily family, double length, double aspect) {
    switch (family) {
        case ShapeFamily::Ellipse: return kPi * 0.25 * length * length * aspect;
        case ShapeFamily::Rectangle: return length * length * aspect;
        case ShapeFamily::Triangle: return 0.5 * length * length * aspect;
    }
    return 0.0;
}

// Pixel (x, y) is foreground when its centre (x + 0.5, y + 0.5) lies inside.
// Even-odd scanline fill with half-open edge spans so shared vertices count once.
BinaryMask rasterize(const Polygon& poly, int width, int height) {
    BinaryMask m(width, height);
    const auto ext = polygon_extent(poly);
    const int y_lo = std::max(0, static_cast<int>(std::floor(ext.y)) - 1);
    const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(ext.y + ext.h)) + 1);
    std::vector<double> xs;
    for (int y = y_lo; y <= y_hi; ++y) {
        const double yc = y + 0.5;
        xs.clear();
        for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
            const auto& p = poly[j];
            const auto& q = poly[i];
            if ((p.y <= yc) != (q.y <= yc)) xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
            const int x1 = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
            for (int x = x0; x <= x1; ++x) m.set(x, y);
        }
    }
    return m;
}

BinaryMask rasterize_disk(double cx, double cy, double r, int width, int height) {
    BinaryMask m(width, height);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)) - 1);
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + r)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)) - 1);
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + r)) + 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r * r) m.set(x, y);
        }
    }
    return m;
}

// Low-order radial wobble standing in for a change of viewpoint.
Polygon jitter(const Polygon& base, double amplitude, Rng& rng) {
    double w[3], phase[3], norm = 0.0;
    for (int k = 0; k < 3; ++k) {
        w[k] = rng.uniform(0.2, 1.0);
        phase[k] = rng.uniform(0.0, 2.0 * kPi);
        norm += w[k];
    }
    Polygon out;
    out.reserve(base.size());
    for (const auto& v : base) {
        const double t = std::atan2(v.y, v.x);
        double e = 0.0;
        for (int k = 0; k < 3; ++k) e += w[k] * std::sin((k + 3) * t + phase[k]);
        const double s = 1.0 + amplitude * e / norm;
        out.push_back({v.x * s, v.y * s});
    }
    return out;
}

Polygon place(const Polygon& local_px, double angle, double cx, double cy) {
    const double c = std::cos(angle), s = std::sin(angle);
    Polygon out;
    out.reserve(local_px.size());
    for (const auto& v : local_px) out.push_back({cx + c * v.x - s * v.y, cy + s * v.x + c * v.y});
    return out;
}

double max_radius(const Polygon& p) {
    double r = 0.0;
    for (const auto& v : p) r = std::max(r, std::hypot(v.x, v.y));
    return r;
}

}  // namespace

const char* shape_family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::Ellipse: return "ellipse";
        case ShapeFamily::Rectangle: return "rectangle";
        case ShapeFamily::Triangle: return "triangle";
    }
    return "unknown";
}

ShapeFamily parse_shape_family(const std::string& name) {
    if (name == "ellipse") return ShapeFamily::Ellipse;
    if (name == "rectangle") return ShapeFamily::Rectangle;
    if (name == "triangle") return ShapeFamily::Triangle;
    throw Error(ErrorCode::ParseError, "unknown shape family '" + name + "'");
}

std::array<ClassShape, kNumFoodClasses> SceneConfig::default_shapes() {
    // Singara, Somusa, Puri, Peaju, Beguni. Per-class calorie ranges are
    // staggered (roughly 22-35, 40-60, 64-85, 90-111, 113-134 kcal) so the
    // pooled target stays light-tailed: with ten views sharing one label, a
    // heavy tail would make the 2-sigma filter drop whole items from training.
    return {{
        {ShapeFamily::Triangle, 68.0, 76.0, 0.85, 0.90, 0.0206},
        {ShapeFamily::Triangle, 57.0, 63.0, 0.62, 0.68, 0.0405},
        {ShapeFamily::Ellipse, 90.0, 105.0, 0.92, 1.00, 0.00433},
        {ShapeFamily::Ellipse, 42.0, 52.0, 0.80, 0.90, 0.0160},
        {ShapeFamily::Ellipse, 100.0, 120.0, 0.33, 0.40, 0.01004},
    }};
}

void validate(const SceneConfig& c) {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (c.width < 16 || c.height < 16) bad("image must be at least 16x16");
    if (c.coin_diameter_min_px < 2 || c.coin_diameter_max_px < c.coin_diameter_min_px) bad("invalid coin diameter range");
    if (c.items_per_scene < 1) bad("items_per_scene must be >= 1");
    if (c.views_per_item < 1) bad("views_per_item must be >= 1");
    if (c.max_placement_attempts < 1) bad("max_placement_attempts must be >= 1");
    if (c.margin_px < 0) bad("margin_px must be >= 0");
    if (!(c.boundary_noise >= 0.0 && c.boundary_noise < 0.5)) bad("boundary_noise must be in [0, 0.5)");
    if (!(c.weight_noise >= 0.0 && c.weight_noise < 1.0)) bad("weight_noise must be in [0, 1)");
    for (const auto& s : c.shapes) {
        if (!(s.length_min_mm > 0.0 && s.length_max_mm >= s.length_min_mm)) bad("invalid shape length range");
        if (!(s.aspect_min > 0.0 && s.aspect_max >= s.aspect_min)) bad("invalid shape aspect range");
        if (!(s.thickness_g_per_mm2 > 0.0)) bad("thickness must be > 0");
    }
}

nlohmann::ordered_json to_json(const SceneConfig& c) {
    nlohmann::ordered_json shapes, dens;
    for (std::size_t i = 0; i < kNumFoodClasses; ++i) {
        const auto& s = c.shapes[i];
        const std::string name(class_name(kFoodClasses[i]));
        shapes[name] = {{"family", shape_family_name(s.family)},
                        {"length_mm", {s.length_min_mm, s.length_max_mm}},
                        {"aspect", {s.aspect_min, s.aspect_max}},
                        {"thickness_g_per_mm2", s.thickness_g_per_mm2}};
        dens[name] = c.densities.density(kFoodClasses[i]);
    }
    nlohmann::ordered_json j;
    j["width"] = c.width;
    j["height"] = c.height;
    j["coin_diameter_px"] = {c.coin_diameter_min_px, c.coin_diameter_max_px};
    j["items_per_scene"] = c.items_per_scene;
    j["boundary_noise"] = c.boundary_noise;
    j["weight_noise"] = c.weight_noise;
    j["views_per_item"] = c.views_per_item;
    j["max_placement_attempts"] = c.max_placement_attempts;
    j["margin_px"] = c.margin_px;
    j["shapes"] = shapes;
    j["densities"] = dens;
    return j;
}

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = detail::get_field<T>(j, key);
}

void maybe_range(const nlohmann::json& j, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = detail::get_field<std::vector<double>>(j, key);
    if (v.size() != 2) throw Error(ErrorCode::ParseError, std::string("'") + key + "' must be [min, max]");
    lo = v[0];
    hi = v[1];
}

}  // namespace

SceneConfig scene_config_from_json(const nlohmann::json& j, SceneConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "scene config must be a JSON object");
    static const std::array<const char*, 11> known = {"width",          "height",       "coin_diameter_px",
                                                      "items_per_scene", "boundary_noise", "weight_noise",
                                                      "views_per_item", "max_placement_attempts", "margin_px",
                                                      "shapes",         "densities"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw Error(ErrorCode::ParseError, "unknown scene config key '" + it.key() + "'");
        }
    }
    maybe(j, "width", c.width);
    maybe(j, "height", c.height);
    if (j.contains("coin_diameter_px")) {
        const auto v = detail::get_field<std::vector<int>>(j, "coin_diameter_px");
        if (v.size() != 2) throw Error(ErrorCode::ParseError, "'coin_diameter_px' must be [min, max]");
        c.coin_diameter_min_px = v[0];
        c.coin_diameter_max_px = v[1];
    }
    maybe(j, "items_per_scene", c.items_per_scene);
    maybe(j, "boundary_noise", c.boundary_noise);
    maybe(j, "weight_noise", c.weight_noise);
    maybe(j, "views_per_item", c.views_per_item);
    maybe(j, "max_placement_attempts", c.max_placement_attempts);
    maybe(j, "margin_px", c.margin_px);
    if (j.contains("shapes")) {
        const auto shapes = detail::get_field<nlohmann::json>(j, "shapes");
        for (auto it = shapes.begin(); it != shapes.end(); ++it) {
            const auto label = parse_class(it.key());
            if (!is_food(label)) throw Error(ErrorCode::ParseError, "coin has no shape entry");
            auto& s = c.shapes[static_cast<std::size_t>(label)];
            if (it->contains("family")) s.family = parse_shape_family(detail::get_field<std::string>(*it, "family"));
            maybe_range(*it, "length_mm", s.length_min_mm, s.length_max_mm);
            maybe_range(*it, "aspect", s.aspect_min, s.aspect_max);
            maybe(*it, "thickness_g_per_mm2", s.thickness_g_per_mm2);
        }
    }
    if (j.contains("densities")) {
        const auto dens = detail::get_field<nlohmann::json>(j, "densities");
        for (auto it = dens.begin(); it != dens.end(); ++it) {
            if (!it->is_number()) throw Error(ErrorCode::ParseError, "density for '" + it.key() + "' must be a number");
            c.densities.set(parse_class(it.key()), it->get<double>());
        }
    }
    validate(c);
    return c;
}

ItemSpec sample_item(const SceneConfig& cfg, ClassLabel label, Rng& rng) {
    if (!is_food(label)) throw Error(ErrorCode::InvalidArgument, "items must be food classes");
    const auto& s = cfg.shapes[static_cast<std::size_t>(label)];
    ItemSpec it;
    it.label = label;
    it.length_mm = rng.uniform(s.length_min_mm, s.length_max_mm);
    it.aspect = rng.uniform(s.aspect_min, s.aspect_max);
    it.area_mm2 = analytic_area(s.family, it.length_mm, it.aspect);
    const double noise = 1.0 + rng.uniform(-cfg.weight_noise, cfg.weight_noise);
    it.weight_g = it.area_mm2 * s.thickness_g_per_mm2 * noise;
    it.calories_kcal = calorie_label(it.weight_g, label, cfg.densities);
    return it;
}

Scene render_scene(const SceneConfig& cfg, const std::vector<ItemSpec>& items, Rng& rng) {
    validate(cfg);
    Scene scene;
    scene.width = cfg.width;
    scene.height = cfg.height;
    const int diameter = static_cast<int>(rng.uniform_int(cfg.coin_diameter_min_px, cfg.coin_diameter_max_px));
    const double mm_per_px = kCoinDiameterMm / diameter;
    scene.truth.coin_diameter_px = diameter;
    scene.truth.mm_per_px = mm_per_px;

    // Local pixel-space outlines, then placement by bounding circles.
    std::vector<Polygon> local;
    std::vector<double> angle, radius;
    for (const auto& it : items) {
        const auto& shape = cfg.shapes[static_cast<std::size_t>(it.label)];
        Polygon p = jitter(base_outline(shape.family, it.length_mm, it.aspect), cfg.boundary_noise, rng);
        for (auto& v : p) {
            v.x /= mm_per_px;
            v.y /= mm_per_px;
        }
        angle.push_back(rng.uniform(0.0, 2.0 * kPi));
        radius.push_back(max_radius(p));
        local.push_back(std::move(p));
    }
    radius.insert(radius.begin(), 0.5 * diameter);

    // Largest first; the coin (index 0) usually fits in whatever room is left.
    std::vector<std::size_t> order(radius.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return radius[a] > radius[b]; });
    std::vector<Vec2> centers(radius.size());
    std::vector<std::size_t> placed_ids;
    const double margin = cfg.margin_px;
    for (auto k : order) {
        const double r = radius[k] + margin;
        if (2.0 * r > cfg.width || 2.0 * r > cfg.height) {
            throw Error(ErrorCode::PlacementFailure, "object of radius " + std::to_string(radius[k]) +
                                                         " px does not fit the image");
        }
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_placement_attempts && !placed; ++attempt) {
            const Vec2 c{rng.uniform(r, cfg.width - r), rng.uniform(r, cfg.height - r)};
            placed = true;
            for (auto o : placed_ids) {
                if (std::hypot(c.x - centers[o].x, c.y - centers[o].y) <= radius[k] + radius[o] + margin) {
                    placed = false;
                    break;
                }
            }
            if (placed) {
                centers[k] = c;
                placed_ids.push_back(k);
            }
        }
        if (!placed) {
            throw Error(ErrorCode::PlacementFailure,
                        "no room after " + std::to_string(cfg.max_placement_attempts) + " attempts");
        }
    }

    DetectionInstance coin;
    coin.label = ClassLabel::Coin;
    coin.mask = rasterize_disk(centers[0].x, centers[0].y, 0.5 * diameter, cfg.width, cfg.height);
    coin.bbox = foreground_bbox(coin.mask);
    InstanceTruth coin_truth;
    coin_truth.area_px = kPi * 0.25 * diameter * diameter;
    coin_truth.perimeter_px = kPi * diameter;
    coin_truth.bbox_px = RealBox{centers[0].x - 0.5 * diameter, centers[0].y - 0.5 * diameter,
                                 static_cast<double>(diameter), static_cast<double>(diameter)};
    scene.instances.push_back(std::move(coin));
    scene.truth.instances.push_back(coin_truth);

    for (std::size_t i = 0; i < items.size(); ++i) {
        const Polygon poly = place(local[i], angle[i], centers[i + 1].x, centers[i + 1].y);
        DetectionInstance d;
        d.label = items[i].label;
        d.mask = rasterize(poly, cfg.width, cfg.height);
        if (d.mask.empty()) throw Error(ErrorCode::PlacementFailure, "item rendered to an empty mask");
        d.bbox = foreground_bbox(d.mask);
        InstanceTruth t;
        t.label = items[i].label;
        t.area_px = polygon_area(poly);
        t.perimeter_px = polygon_length(poly);
        t.bbox_px = polygon_extent(poly);
        t.weight_g = items[i].weight_g;
        t.calories_kcal = items[i].calories_kcal;
        scene.instances.push_back(std::move(d));
        scene.truth.instances.push_back(t);
    }
    return scene;
}

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng(seed);
    std::vector<ItemSpec> items;
    for (int i = 0; i < cfg.items_per_scene; ++i) items.push_back(sample_item(cfg, kFoodClasses[rng.index(kNumFoodClasses)], rng));
    return render_scene(cfg, items, rng);
}

ManifestImage write_scene(const std::filesystem::path& dir, const std::string& id, const Scene& scene) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    ManifestImage img;
    img.id = id;
    img.width = scene.width;
    img.height = scene.height;
    for (std::size_t k = 0; k < scene.instances.size(); ++k) {
        const auto& d = scene.instances[k];
        const std::string file = id + "_" + std::to_string(k) + ".pgm";
        write_pgm(dir / file, d.mask);
        std::optional<double> kcal;
        if (is_food(d.label)) kcal = scene.truth.instances[k].calories_kcal;
        img.instances.push_back(ManifestInstance{d.label, std::nullopt, d.bbox, file, kcal});
    }
    return img;
}

nlohmann::ordered_json truth_json(const std::string& id, const SceneTruth& truth) {
    auto instances = nlohmann::ordered_json::array();
    for (const auto& t : truth.instances) {
        nlohmann::ordered_json j;
        j["class"] = std::string(class_name(t.label));
        j["area_px"] = t.area_px;
        j["perimeter_px"] = t.perimeter_px;
        j["bbox_px"] = {t.bbox_px.x, t.bbox_px.y, t.bbox_px.w, t.bbox_px.h};
        if (is_food(t.label)) {
            j["weight_g"] = t.weight_g;
            j["calories_kcal"] = t.calories_kcal;
        }
        instances.push_back(j);
    }
    nlohmann::ordered_json j;
    j["id"] = id;
    j["coin_diameter_px"] = truth.coin_diameter_px;
    j["mm_per_px"] = truth.mm_per_px;
    j["instances"] = instances;
    return j;
}

GeneratedDataset generate_regression_dataset(const SceneConfig& cfg, std::size_t n_records, std::uint64_t seed,
                                             int threads) {
    validate(cfg);
    if (n_records == 0) throw Error(ErrorCode::InvalidArgument, "n_records must be >= 1");
    const auto views = static_cast<std::size_t>(cfg.views_per_item);
    const std::size_t n_items = (n_records + views - 1) / views;

    std::vector<ItemSpec> items;
    for (std::size_t i = 0; i < n_items; ++i) {
        Rng rng(derive_seed(derive_seed(seed, i), 0));
        items.push_back(sample_item(cfg, kFoodClasses[i % kNumFoodClasses], rng));
    }

    GeneratedDataset out;
    out.records.resize(n_records);
    out.truth.resize(n_records);
    std::vector<int> coin_px(n_records);

    auto make = [&](std::size_t r) {
        const std::size_t item = r / views, view = r % views;
        Rng rng(derive_seed(derive_seed(seed, item), view + 1));
        const Scene scene = render_scene(cfg, {items[item]}, rng);
        auto extracted = measure_scene(scene.instances);
        if (extracted.records.size() != 1) {
            throw Error(ErrorCode::EmptyMask, "record " + std::to_string(r) + " did not yield one food instance");
        }
        auto rec = extracted.records[0];
        rec.calories_kcal = items[item].calories_kcal;
        out.records[r] = rec;

        const auto& t = scene.truth.instances[1];
        const double s = scene.truth.mm_per_px;
        out.truth[r] = RecordTruth{item, view, s, t.bbox_px.h * s, t.bbox_px.w * s, t.area_px * s * s, t.perimeter_px * s};
        coin_px[r] = scene.truth.coin_diameter_px;
    };

    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
    if (workers == 1) {
        for (std::size_t r = 0; r < n_records; ++r) make(r);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t r = w; r < n_records; r += workers) make(r);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    auto records = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < n_records; ++r) {
        const auto& t = out.truth[r];
        const auto& it = items[t.item];
        nlohmann::ordered_json j;
        j["item"] = t.item;
        j["view"] = t.view;
        j["class"] = std::string(class_name(it.label));
        j["coin_diameter_px"] = coin_px[r];
        j["mm_per_px"] = t.mm_per_px;
        j["weight_g"] = it.weight_g;
        j["calories_kcal"] = it.calories_kcal;
        j["true_height_mm"] = t.height_mm;
        j["true_width_mm"] = t.width_mm;
        j["true_area_mm2"] = t.area_mm2;
        j["true_perimeter_mm"] = t.perimeter_mm;
        records.push_back(j);
    }
    out.manifest["format"] = "foodcal.dataset";
    out.manifest["version"] = 1;
    out.manifest["seed"] = seed;
    out.manifest["n_records"] = n_records;
    out.manifest["n_items"] = n_items;
    out.manifest["config"] = to_json(cfg);
    out.manifest["records"] = records;
    return out;
}

}  // namespace foodcal
