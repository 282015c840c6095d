#include "cli.hpp"

#include "foodcal/error.hpp"
#include "foodcal/manifest.hpp"
#include "foodcal/measurement.hpp"
#include "foodcal/metrics.hpp"
#include "foodcal/nnblocks.hpp"
#include "foodcal/preprocess.hpp"
#include "foodcal/regress.hpp"
#include "foodcal/rng.hpp"
#include "foodcal/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <thread>

namespace foodcal::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Bad flag values discovered after parsing; exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config file keys:
//   seed, threads, out_dir, coin_diameter_mm, zscore_threshold,
//   split {train, valid, test}, records, scenes, confidence_cutoff,
//   model {algorithm, k, max_depth, min_samples_leaf, n_estimators,
//          max_features, learning_rate, ridge},
//   scene {any SceneConfig key}
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    fs::path out_dir;
    double coin_diameter_mm = kCoinDiameterMm;
    double zscore_threshold = kZScoreThreshold;
    SplitFractions split;
    std::size_t records = 644;
    std::size_t scenes = 0;
    double confidence_cutoff = 0.0;
    std::string model = "rf";
    nlohmann::json model_overrides = nlohmann::json::object();
    SceneConfig scene;
};

const std::set<std::string> kModelKeys = {"k",         "max_depth",    "min_samples_leaf", "n_estimators",
                                          "max_features", "learning_rate", "ridge"};

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, std::string("config key '") + key + "' has the wrong type");
    }
}

void apply_config_file(const fs::path& path, RunConfig& c) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
    static const std::set<std::string> known = {"seed",   "threads", "out_dir", "coin_diameter_mm",
                                                "zscore_threshold", "split", "records", "scenes",
                                                "confidence_cutoff", "model", "scene"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw Error(ErrorCode::ParseError, "unknown config key '" + it.key() + "'");
    }
    maybe(j, "seed", c.seed);
    maybe(j, "threads", c.threads);
    if (j.contains("out_dir")) {
        std::string dir;
        maybe(j, "out_dir", dir);
        c.out_dir = dir;
    }
    maybe(j, "coin_diameter_mm", c.coin_diameter_mm);
    maybe(j, "zscore_threshold", c.zscore_threshold);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        maybe(s, "train", c.split.train);
        maybe(s, "valid", c.split.valid);
        maybe(s, "test", c.split.test);
    }
    maybe(j, "records", c.records);
    maybe(j, "scenes", c.scenes);
    maybe(j, "confidence_cutoff", c.confidence_cutoff);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (!m.is_object()) throw Error(ErrorCode::ParseError, "config key 'model' must be an object");
        for (auto it = m.begin(); it != m.end(); ++it) {
            if (it.key() == "algorithm") {
                maybe(m, "algorithm", c.model);
                parse_algorithm(c.model);
            } else if (kModelKeys.count(it.key())) {
                c.model_overrides[it.key()] = it.value();
            } else {
                throw Error(ErrorCode::ParseError, "unknown model key '" + it.key() + "'");
            }
        }
    }
    if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"), c.scene);
}

ModelSpec resolve_model_spec(const RunConfig& c) {
    ModelSpec s = ModelSpec::defaults(parse_algorithm(c.model), c.seed);
    const auto& o = c.model_overrides;
    maybe(o, "k", s.k);
    maybe(o, "max_depth", s.max_depth);
    maybe(o, "min_samples_leaf", s.min_samples_leaf);
    maybe(o, "n_estimators", s.n_estimators);
    maybe(o, "max_features", s.max_features);
    maybe(o, "learning_rate", s.learning_rate);
    maybe(o, "ridge", s.ridge);
    // Round trip through JSON to reuse its validation.
    return model_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
}

ojson config_json(const RunConfig& c) {
    ojson j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["out_dir"] = c.out_dir.string();
    j["coin_diameter_mm"] = c.coin_diameter_mm;
    j["zscore_threshold"] = c.zscore_threshold;
    j["split"] = {{"train", c.split.train}, {"valid", c.split.valid}, {"test", c.split.test}};
    j["records"] = c.records;
    j["scenes"] = c.scenes;
    j["confidence_cutoff"] = c.confidence_cutoff;
    j["model"] = to_json(resolve_model_spec(c));
    j["scene"] = to_json(c.scene);
    return j;
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

// --- trained model file ---

struct TrainedModel {
    std::uint64_t split_seed = 0;
    SplitFractions split;
    bool split_applied = true;
    std::size_t n_rows = 0;
    double zscore_threshold = kZScoreThreshold;
    std::size_t train_rows = 0;
    std::size_t train_rows_kept = 0;
    NormalizationParams norm;
    Regressor regressor;
};

ojson to_json(const TrainedModel& m) {
    ojson j;
    j["format"] = "foodcal.trained_model";
    j["version"] = 1;
    j["split"] = {{"applied", m.split_applied}, {"seed", m.split_seed}, {"train", m.split.train},
                  {"valid", m.split.valid},     {"test", m.split.test}, {"n_rows", m.n_rows}};
    j["zscore_threshold"] = m.zscore_threshold;
    j["train_rows"] = m.train_rows;
    j["train_rows_kept"] = m.train_rows_kept;
    j["normalization"] = {{"min", m.norm.min}, {"max", m.norm.max}};
    j["regressor"] = foodcal::to_json(m.regressor);
    return j;
}

TrainedModel read_trained_model(const fs::path& path) {
    TrainedModel m;
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        if (j.at("format") != "foodcal.trained_model" || j.at("version") != 1) {
            throw Error(ErrorCode::ParseError, path.string() + " is not a trained model file");
        }
        const auto& s = j.at("split");
        m.split_applied = s.at("applied").get<bool>();
        m.split_seed = s.at("seed").get<std::uint64_t>();
        m.split.train = s.at("train").get<double>();
        m.split.valid = s.at("valid").get<double>();
        m.split.test = s.at("test").get<double>();
        m.n_rows = s.at("n_rows").get<std::size_t>();
        m.zscore_threshold = j.at("zscore_threshold").get<double>();
        m.train_rows = j.at("train_rows").get<std::size_t>();
        m.train_rows_kept = j.at("train_rows_kept").get<std::size_t>();
        m.norm.min = j.at("normalization").at("min").get<std::array<double, kNumNumericFeatures>>();
        m.norm.max = j.at("normalization").at("max").get<std::array<double, kNumNumericFeatures>>();
        m.regressor = regressor_from_json(j.at("regressor"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return m;
}

std::vector<double> predict_rows(const TrainedModel& m, const std::vector<FeatureRecord>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(m.regressor.predict(minmax_apply(m.norm, feature_vector(r))));
    return out;
}

std::vector<FeatureRecord> with_predictions(std::vector<FeatureRecord> rows, const std::vector<double>& pred) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].calories_kcal = pred[i];
    return rows;
}

// --- extraction shared by extract and pipeline ---

struct ExtractedItem {
    std::string image;
    std::size_t instance = 0;
    FeatureRecord record;
};

std::vector<ExtractedItem> extract_annotations(const fs::path& annotations, double coin_mm, std::ostream& err) {
    const auto manifest = read_manifest(annotations);
    const auto base = annotations.parent_path();
    std::vector<ExtractedItem> items;
    for (const auto& img : manifest.images) {
        const auto detections = load_instances(img, base);
        ExtractionResult res;
        try {
            res = measure_scene(detections, coin_mm);
        } catch (const Error& e) {
            throw Error(e.code(), "image '" + img.id + "': " + e.what());
        }
        for (const auto& s : res.skipped) {
            err << "warning: image '" << img.id << "' instance " << s.index << " skipped: " << s.reason << "\n";
        }
        for (std::size_t r = 0; r < res.records.size(); ++r) {
            const std::size_t k = res.source_index[r];
            ExtractedItem it{img.id, k, res.records[r]};
            it.record.calories_kcal = img.instances[k].calories_kcal;
            items.push_back(std::move(it));
        }
    }
    return items;
}

std::vector<FeatureRecord> records_of(const std::vector<ExtractedItem>& items) {
    std::vector<FeatureRecord> rows;
    for (const auto& it : items) rows.push_back(it.record);
    return rows;
}

// --- run bookkeeping ---

struct RunContext {
    std::string command;
    std::vector<std::string> args;
    RunConfig config;
    ojson inputs = ojson::object();
    ojson outputs = ojson::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    fs::path output(const std::string& name, const std::string& file) {
        const auto p = config.out_dir / file;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        outputs[name] = p.string();
        return p;
    }
};

void write_run_manifest(RunContext& ctx) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    ojson j;
    j["format"] = "foodcal.run";
    j["command"] = ctx.command;
    j["args"] = ctx.args;
    j["config"] = config_json(ctx.config);
    j["seed"] = ctx.config.seed;
    j["inputs"] = ctx.inputs;
    j["outputs"] = ctx.outputs;
    j["version"] = kVersion;
    j["wall_clock_s"] = secs;
    write_text_file(ctx.config.out_dir / ("run_" + ctx.command + ".json"), dump(j));
}

template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// --- commands ---

void cmd_gen(RunContext& ctx, std::ostream& out) {
    const auto& c = ctx.config;
    if (c.scenes > 0) {
        const auto dir = c.out_dir / "scenes";
        std::vector<ManifestImage> images(c.scenes);
        std::vector<ojson> truths(c.scenes);
        parallel_for(c.scenes, c.threads, [&](std::size_t i) {
            char id[32];
            std::snprintf(id, sizeof id, "scene_%05zu", i);
            const auto scene = generate_scene(c.scene, derive_seed(c.seed, i));
            images[i] = write_scene(dir, id, scene);
            truths[i] = truth_json(id, scene.truth);
        });
        Manifest m;
        m.images = std::move(images);
        write_manifest(ctx.output("annotations", "scenes/annotations.json"), m);
        ojson t;
        t["format"] = "foodcal.scene_truth";
        t["seed"] = c.seed;
        t["config"] = to_json(c.scene);
        t["scenes"] = truths;
        write_text_file(ctx.output("truth", "scenes/truth.json"), dump(t));
        out << "wrote " << c.scenes << " scenes to " << dir.string() << "\n";
        return;
    }
    if (c.records == 0) throw UsageError("--records must be at least 1");
    const auto g = generate_regression_dataset(c.scene, c.records, c.seed, c.threads);
    write_dataset_csv(ctx.output("dataset", "dataset.csv"), g.records);
    write_text_file(ctx.output("manifest", "dataset_manifest.json"), dump(g.manifest));
    out << "wrote " << g.records.size() << " records to " << (c.out_dir / "dataset.csv").string() << "\n";
}

void cmd_extract(RunContext& ctx, const fs::path& annotations, std::ostream& out, std::ostream& err) {
    ctx.inputs["annotations"] = annotations.string();
    const auto items = extract_annotations(annotations, ctx.config.coin_diameter_mm, err);
    write_dataset_csv(ctx.output("features", "features.csv"), records_of(items));
    out << "extracted " << items.size() << " food instances\n";
}

void cmd_train(RunContext& ctx, const fs::path& data, bool use_all, std::ostream& out) {
    const auto& c = ctx.config;
    ctx.inputs["data"] = data.string();
    const auto rows = read_dataset_csv(data);
    TrainedModel m;
    m.split_seed = c.seed;
    m.split = c.split;
    m.split_applied = !use_all;
    m.n_rows = rows.size();
    m.zscore_threshold = c.zscore_threshold;
    const auto train = use_all ? rows : split(rows, c.split, c.seed).train;
    const auto kept = zscore_filter(train, c.zscore_threshold);
    m.train_rows = train.size();
    m.train_rows_kept = kept.size();
    auto norm = minmax_fit_apply(kept);
    m.norm = norm.params;
    m.regressor = fit(resolve_model_spec(c), to_dataset(norm.rows), c.threads);
    write_text_file(ctx.output("model", "model.json"), dump(to_json(m)));
    out << "trained " << algorithm_name(m.regressor.spec.algorithm) << " on " << kept.size() << " of "
        << train.size() << " rows\n";
}

std::vector<FeatureRecord> subset_rows(const TrainedModel& m, const std::vector<FeatureRecord>& rows,
                                       const std::string& subset) {
    if (subset == "all") return rows;
    if (!m.split_applied) throw UsageError("model was trained without a split; use --subset all");
    if (rows.size() != m.n_rows) {
        throw Error(ErrorCode::ShapeMismatch, "dataset has " + std::to_string(rows.size()) +
                                                  " rows but the model was split on " + std::to_string(m.n_rows));
    }
    const auto parts = split_indices(rows.size(), m.split, m.split_seed);
    const auto& idx = subset == "train" ? parts.train : subset == "valid" ? parts.valid : parts.test;
    std::vector<FeatureRecord> out;
    for (auto i : idx) out.push_back(rows[i]);
    return out;
}

std::vector<double> targets(const std::vector<FeatureRecord>& rows) {
    std::vector<double> y;
    for (const auto& r : rows) {
        if (!r.calories_kcal) throw Error(ErrorCode::ParseError, "row without a calorie target");
        y.push_back(*r.calories_kcal);
    }
    return y;
}

void cmd_eval(RunContext& ctx, const fs::path& data, const std::optional<fs::path>& model_path,
              const std::optional<fs::path>& predictions, std::optional<std::string> subset, std::ostream& out) {
    ctx.inputs["data"] = data.string();
    const auto rows = read_dataset_csv(data);
    std::vector<double> pred, truth;
    ojson report;
    if (predictions) {
        ctx.inputs["predictions"] = predictions->string();
        if (subset && *subset != "all") throw UsageError("--subset applies only with --model");
        const auto p = read_dataset_csv(*predictions);
        if (p.size() != rows.size()) {
            throw Error(ErrorCode::LengthMismatch, "predictions and data differ in row count");
        }
        pred = targets(p);
        truth = targets(rows);
        report["subset"] = "all";
    } else {
        ctx.inputs["model"] = model_path->string();
        const auto m = read_trained_model(*model_path);
        const std::string s = subset.value_or(m.split_applied ? "test" : "all");
        const auto sel = subset_rows(m, rows, s);
        truth = targets(sel);
        pred = predict_rows(m, sel);
        report["subset"] = s;
        report["model"] = algorithm_name(m.regressor.spec.algorithm);
    }
    const auto metrics = regression_metrics(pred, truth);
    report["n"] = truth.size();
    report["metrics"] = foodcal::to_json(metrics);
    write_text_file(ctx.output("report", "eval_report.json"), dump(report));
    out << format_table(metrics);
}

void cmd_predict(RunContext& ctx, const fs::path& data, const fs::path& model_path, std::ostream& out) {
    ctx.inputs["data"] = data.string();
    ctx.inputs["model"] = model_path.string();
    const auto m = read_trained_model(model_path);
    const auto rows = read_dataset_csv(data);
    write_dataset_csv(ctx.output("predictions", "predictions.csv"), with_predictions(rows, predict_rows(m, rows)));
    out << "predicted " << rows.size() << " rows\n";
}

void cmd_pipeline(RunContext& ctx, const fs::path& annotations, const fs::path& model_path, std::ostream& out,
                  std::ostream& err) {
    ctx.inputs["annotations"] = annotations.string();
    ctx.inputs["model"] = model_path.string();
    const auto m = read_trained_model(model_path);
    const auto items = extract_annotations(annotations, ctx.config.coin_diameter_mm, err);
    const auto rows = records_of(items);
    const auto pred = predict_rows(m, rows);
    write_dataset_csv(ctx.output("estimates", "estimates.csv"), with_predictions(rows, pred));
    auto list = ojson::array();
    for (std::size_t i = 0; i < items.size(); ++i) {
        ojson j;
        j["image"] = items[i].image;
        j["instance"] = items[i].instance;
        j["class"] = std::string(class_name(items[i].record.label));
        j["predicted_kcal"] = pred[i];
        if (items[i].record.calories_kcal) j["true_kcal"] = *items[i].record.calories_kcal;
        list.push_back(j);
        char line[160];
        std::snprintf(line, sizeof line, "%-14s %3zu %-8s %10.2f kcal\n", items[i].image.c_str(),
                      items[i].instance, std::string(class_name(items[i].record.label)).c_str(), pred[i]);
        out << line;
    }
    write_text_file(ctx.output("estimates_json", "estimates.json"), dump(ojson{{"items", list}}));
}

void cmd_gradcheck(RunContext& ctx, const std::vector<std::string>& blocks, int seeds, double tolerance,
                   std::ostream& out) {
    auto list = ojson::array();
    bool all_ok = true;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %6s %14s %10s\n", "block", "seeds", "max_rel_error", "checked");
    out << line;
    for (const auto& name : blocks) {
        const auto kind = nn::parse_block(name);
        double worst = 0.0;
        std::size_t checked = 0;
        for (int s = 0; s < seeds; ++s) {
            const auto r = nn::gradcheck(kind, ctx.config.seed + static_cast<std::uint64_t>(s));
            worst = std::max(worst, r.max_rel_error);
            checked += r.checked;
        }
        const bool ok = worst < tolerance;
        all_ok = all_ok && ok;
        list.push_back(ojson{{"block", std::string(nn::block_name(kind))},
                             {"seeds", seeds},
                             {"max_rel_error", worst},
                             {"checked", checked},
                             {"pass", ok}});
        std::snprintf(line, sizeof line, "%-10s %6d %14.3e %10zu %s\n", std::string(nn::block_name(kind)).c_str(), seeds,
                      worst, checked, ok ? "ok" : "FAIL");
        out << line;
    }
    write_text_file(ctx.output("report", "gradcheck.json"),
                    dump(ojson{{"tolerance", tolerance}, {"pass", all_ok}, {"blocks", list}}));
}

std::vector<Detection> to_detections(const std::vector<DetectionInstance>& in) {
    std::vector<Detection> out;
    for (const auto& d : in) out.push_back(Detection{d.label, d.confidence, d.bbox, d.mask});
    return out;
}

void cmd_detmetrics(RunContext& ctx, const fs::path& pred_path, const fs::path& gt_path, std::ostream& out) {
    ctx.inputs["pred"] = pred_path.string();
    ctx.inputs["gt"] = gt_path.string();
    const auto pred = read_manifest(pred_path);
    const auto gt = read_manifest(gt_path);
    std::map<std::string, const ManifestImage*> by_id;
    for (const auto& img : pred.images) {
        if (!by_id.emplace(img.id, &img).second) {
            throw Error(ErrorCode::ParseError, "duplicate prediction image '" + img.id + "'");
        }
    }
    std::vector<ImageDetections> images;
    std::set<std::string> seen;
    for (const auto& g : gt.images) {
        if (!seen.insert(g.id).second) throw Error(ErrorCode::ParseError, "duplicate ground-truth image '" + g.id + "'");
        ImageDetections im;
        im.gts = to_detections(load_instances(g, gt_path.parent_path()));
        const auto it = by_id.find(g.id);
        if (it != by_id.end()) {
            if (it->second->width != g.width || it->second->height != g.height) {
                throw Error(ErrorCode::ShapeMismatch, "image '" + g.id + "' differs in size between manifests");
            }
            im.preds = to_detections(load_instances(*it->second, pred_path.parent_path()));
            by_id.erase(it);
        }
        images.push_back(std::move(im));
    }
    if (!by_id.empty()) {
        throw Error(ErrorCode::ParseError, "prediction image '" + by_id.begin()->first + "' has no ground truth");
    }
    const auto report = map_summary(images, MapOptions{ctx.config.confidence_cutoff});
    write_text_file(ctx.output("report", "detmetrics.json"), dump(foodcal::to_json(report)));
    out << format_table(report);
}

// --- argument wiring ---

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> config;
    std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--seed", f.seed, "Random seed (default 0)");
    sub->add_option("--threads", f.threads, "Worker threads (default 1)")->check(CLI::Range(1, 1024));
    sub->add_option("--config", f.config, "JSON config file; flags take precedence")->check(CLI::ExistingFile);
    sub->add_option("--out", f.out,
                    std::string("Output directory (default $") + kOutDirEnv + " or " + kFallbackOutDir + ")");
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig c;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) {
        c.out_dir = env;
    } else {
        c.out_dir = kFallbackOutDir;
    }
    if (f.config) apply_config_file(*f.config, c);
    if (f.seed) c.seed = *f.seed;
    if (f.threads) c.threads = *f.threads;
    if (f.out) c.out_dir = *f.out;
    if (c.threads < 1) throw UsageError("threads must be at least 1");
    return c;
}

const CLI::Validator kAlgorithmName(
    [](std::string& s) -> std::string {
        try {
            parse_algorithm(s);
            return {};
        } catch (const Error&) {
            return "unknown model '" + s + "' (expected rf|knn|lr|dt|gb|ada)";
        }
    },
    "rf|knn|lr|dt|gb|ada");

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Food calorie estimation toolkit: synthetic data, measurement, regression and metrics", "foodcal"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonFlags flags;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic regression dataset or annotated scenes");
    add_common(gen, flags);
    std::optional<std::size_t> records, scenes;
    gen->add_option("--records", records, "Number of dataset records (default 644)");
    gen->add_option("--scenes", scenes, "Write this many annotated mask scenes instead of a dataset");

    auto* extract = app.add_subcommand("extract", "Masks + annotations -> features CSV");
    add_common(extract, flags);
    std::string annotations;
    extract->add_option("--annotations", annotations, "Annotation manifest JSON")->required()->check(CLI::ExistingFile);
    std::optional<double> coin_mm;
    extract->add_option("--coin-mm", coin_mm, "Reference coin diameter in mm (default 25.5)");

    auto* train = app.add_subcommand("train", "Features CSV -> model file");
    add_common(train, flags);
    std::string data;
    train->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    std::optional<std::string> model_name;
    train->add_option("--model", model_name, "Algorithm (default rf)")->check(kAlgorithmName);
    bool use_all = false;
    train->add_flag("--all", use_all, "Train on every row instead of the train split");
    std::optional<int> n_estimators, max_depth, k;
    train->add_option("--n-estimators", n_estimators, "Trees or boosting rounds");
    train->add_option("--max-depth", max_depth, "Tree depth limit (0 = unlimited)");
    train->add_option("--k", k, "Neighbours for knn");

    auto* eval = app.add_subcommand("eval", "Model + CSV -> MAE/MSE/RMSE/R2 report");
    add_common(eval, flags);
    eval->add_option("--data", data, "Dataset CSV with targets")->required()->check(CLI::ExistingFile);
    std::optional<std::string> eval_model, eval_pred, subset;
    auto* m_opt = eval->add_option("--model", eval_model, "Trained model file")->check(CLI::ExistingFile);
    auto* p_opt = eval->add_option("--predictions", eval_pred, "Predictions CSV instead of a model")
                      ->check(CLI::ExistingFile);
    m_opt->excludes(p_opt);
    eval->add_option("--subset", subset, "Rows to score (default test)")
        ->check(CLI::IsMember({"train", "valid", "test", "all"}));

    auto* predict = app.add_subcommand("predict", "Model + features CSV -> predictions CSV");
    add_common(predict, flags);
    std::string model_path;
    predict->add_option("--data", data, "Features CSV")->required()->check(CLI::ExistingFile);
    predict->add_option("--model", model_path, "Trained model file")->required()->check(CLI::ExistingFile);

    auto* pipeline = app.add_subcommand("pipeline", "Annotated scenes + model -> per-item kcal estimates");
    add_common(pipeline, flags);
    pipeline->add_option("--annotations", annotations, "Annotation manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    pipeline->add_option("--model", model_path, "Trained model file")->required()->check(CLI::ExistingFile);
    pipeline->add_option("--coin-mm", coin_mm, "Reference coin diameter in mm (default 25.5)");

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check of the neural blocks");
    add_common(grad, flags);
    std::vector<std::string> blocks{"conv", "coordconv", "cbam", "c2fcd"};
    grad->add_option("--block", blocks, "conv|coordconv|cbam|c2fcd (default all)")
        ->check(CLI::IsMember({"conv", "coordconv", "cbam", "c2fcd", "c2f_cd"}));
    int n_seeds = 10;
    grad->add_option("--seeds", n_seeds, "Number of consecutive seeds from --seed")->check(CLI::Range(1, 100000));
    double tolerance = 1e-4;
    grad->add_option("--tolerance", tolerance, "Pass threshold on the max relative error");

    auto* det = app.add_subcommand("detmetrics", "Prediction + ground-truth manifests -> mAP report");
    add_common(det, flags);
    std::string pred_path, gt_path;
    det->add_option("--pred", pred_path, "Prediction manifest")->required()->check(CLI::ExistingFile);
    det->add_option("--gt", gt_path, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
    std::optional<double> conf;
    det->add_option("--conf", conf, "Confidence cutoff for precision/recall (default 0)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err), kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err), kExitOk;
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err), kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    RunContext ctx;
    ctx.command = sub->get_name();
    ctx.args = args;
    try {
        ctx.config = resolve(flags);
        auto& c = ctx.config;
        if (records) c.records = *records;
        if (scenes) c.scenes = *scenes;
        if (coin_mm) c.coin_diameter_mm = *coin_mm;
        if (model_name) c.model = *model_name;
        if (n_estimators) c.model_overrides["n_estimators"] = *n_estimators;
        if (max_depth) c.model_overrides["max_depth"] = *max_depth;
        if (k) c.model_overrides["k"] = *k;
        if (conf) c.confidence_cutoff = *conf;
        validate(c.scene);
        resolve_model_spec(c);

        if (sub == gen) {
            cmd_gen(ctx, out);
        } else if (sub == extract) {
            cmd_extract(ctx, annotations, out, err);
        } else if (sub == train) {
            cmd_train(ctx, data, use_all, out);
        } else if (sub == eval) {
            if (!eval_model && !eval_pred) throw UsageError("eval needs --model or --predictions");
            std::optional<fs::path> mp, pp;
            if (eval_model) mp = *eval_model;
            if (eval_pred) pp = *eval_pred;
            cmd_eval(ctx, data, mp, pp, subset, out);
        } else if (sub == predict) {
            cmd_predict(ctx, data, model_path, out);
        } else if (sub == pipeline) {
            cmd_pipeline(ctx, annotations, model_path, out, err);
        } else if (sub == grad) {
            cmd_gradcheck(ctx, blocks, n_seeds, tolerance, out);
        } else {
            cmd_detmetrics(ctx, pred_path, gt_path, out);
        }
        write_run_manifest(ctx);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace foodcal::cli
