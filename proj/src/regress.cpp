#include "foodcal/regress.hpp"

#include "foodcal/error.hpp"
#include "foodcal/rng.hpp"
#include "json_field.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace foodcal {

using detail::get_field;

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Linear: return "linear";
        case Algorithm::Knn: return "knn";
        case Algorithm::DTree: return "dtree";
        case Algorithm::RForest: return "rforest";
        case Algorithm::GBoost: return "gboost";
        case Algorithm::AdaBoost: return "adaboost";
    }
    return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "linear" || name == "lr") return Algorithm::Linear;
    if (name == "knn") return Algorithm::Knn;
    if (name == "dtree" || name == "dt") return Algorithm::DTree;
    if (name == "rforest" || name == "rf") return Algorithm::RForest;
    if (name == "gboost" || name == "gb") return Algorithm::GBoost;
    if (name == "adaboost" || name == "ada") return Algorithm::AdaBoost;
    throw Error(ErrorCode::ParseError, "unknown model '" + name + "' (rf|knn|lr|dt|gb|ada)");
}

ModelSpec ModelSpec::defaults(Algorithm a, std::uint64_t seed) {
    ModelSpec s;
    s.algorithm = a;
    s.seed = seed;
    switch (a) {
        case Algorithm::GBoost:
            s.max_depth = 3;
            s.n_estimators = 100;
            break;
        case Algorithm::AdaBoost:
            s.max_depth = 3;
            s.n_estimators = 50;
            break;
        default: break;
    }
    return s;
}

double Tree::predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[i].value;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    // Children are always appended after their parent.
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].feature < 0) continue;
        d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
        best = std::max(best, d[i] + 1);
    }
    return best;
}

namespace {

struct Candidate {
    std::size_t feature;
    double threshold;
    double gain;
};

// Scans every midpoint of every listed feature. Targets are centered on the
// node mean before accumulating so that the gain does not depend on a target
// offset beyond rounding; near-equal gains (relative 1e-12) count as ties.
std::optional<Candidate> search_split(const Dataset& d, std::span<const double> y, std::span<const double> w,
                                      std::span<const std::size_t> rows, std::span<const std::size_t> features,
                                      std::size_t min_leaf, bool allow_zero_gain) {
    if (rows.size() < 2 || rows.size() < 2 * min_leaf) return std::nullopt;
    auto weight = [&](std::size_t r) { return w.empty() ? 1.0 : w[r]; };

    double lo = y[rows[0]], hi = lo, W = 0.0, Wy = 0.0;
    for (auto r : rows) {
        lo = std::min(lo, y[r]);
        hi = std::max(hi, y[r]);
        W += weight(r);
        Wy += weight(r) * y[r];
    }
    if (lo == hi || !(W > 0.0)) return std::nullopt;
    const double mean = Wy / W;

    double S = 0.0, sse = 0.0;
    for (auto r : rows) {
        const double c = y[r] - mean;
        S += weight(r) * c;
        sse += weight(r) * c * c;
    }
    const double parent = S * S / W;
    const double tol = 1e-12 * std::max(sse - parent, 1e-300);

    std::optional<Candidate> best;
    std::vector<std::size_t> order(rows.begin(), rows.end());
    for (auto f : features) {
        auto value = [&](std::size_t r) { return d.x[r * d.n_features + f]; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = value(a), vb = value(b);
            return va < vb || (va == vb && a < b);
        });
        double WL = 0.0, SL = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t r = order[i];
            WL += weight(r);
            SL += weight(r) * (y[r] - mean);
            const double a = value(r), b = value(order[i + 1]);
            if (!(a < b)) continue;
            const std::size_t nl = i + 1, nr = order.size() - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double WR = W - WL, SR = S - SL;
            if (!(WL > 0.0) || !(WR > 0.0)) continue;
            const double gain = SL * SL / WL + SR * SR / WR - parent;
            double t = a + (b - a) * 0.5;
            if (!(t < b)) t = a;
            if (!best) {
                if (gain > tol || (allow_zero_gain && gain > -tol)) best = Candidate{f, t, gain};
            } else if (gain > best->gain + tol) {
                best = Candidate{f, t, gain};
            }
        }
    }
    return best;
}

struct TreeParams {
    int max_depth = 0;  // 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t max_features = 0;  // 0 = all
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& d, std::span<const double> y, std::span<const double> w, TreeParams params, Rng* rng)
        : d_(d), y_(y), w_(w), params_(params), rng_(rng) {
        all_features_.resize(d.n_features);
        std::iota(all_features_.begin(), all_features_.end(), std::size_t{0});
    }

    Tree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{});
        double W = 0.0, Wy = 0.0;
        for (auto r : rows) {
            const double wr = w_.empty() ? 1.0 : w_[r];
            W += wr;
            Wy += wr * y_[r];
        }
        tree_.nodes[id].value = Wy / W;
        if (params_.max_depth > 0 && depth >= params_.max_depth) return id;

        // Impure nodes split even at zero gain so an unlimited tree can always
        // separate distinct feature vectors (XOR-like layouts have no
        // variance-reducing first split).
        const auto split = search_split(d_, y_, w_, rows, features(), params_.min_leaf, true);
        if (!split) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            (d_.x[r * d_.n_features + split->feature] <= split->threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(left, depth + 1);
        const int rgt = grow(right, depth + 1);
        auto& n = tree_.nodes[id];
        n.feature = static_cast<int>(split->feature);
        n.threshold = split->threshold;
        n.left = l;
        n.right = rgt;
        return id;
    }

    std::span<const std::size_t> features() {
        const std::size_t p = d_.n_features;
        if (!rng_ || params_.max_features == 0 || params_.max_features >= p) return all_features_;
        // Partial Fisher-Yates, then ascending so the tie-break stays by index.
        subset_ = all_features_;
        for (std::size_t i = 0; i < params_.max_features; ++i) {
            std::swap(subset_[i], subset_[i + rng_->index(p - i)]);
        }
        subset_.resize(params_.max_features);
        std::sort(subset_.begin(), subset_.end());
        return subset_;
    }

    const Dataset& d_;
    std::span<const double> y_;
    std::span<const double> w_;
    TreeParams params_;
    Rng* rng_;
    std::vector<std::size_t> all_features_;
    std::vector<std::size_t> subset_;
    Tree tree_;
};

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void validate(const ModelSpec& s) {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (s.k < 1) bad("knn k must be >= 1");
    if (s.max_depth < 0) bad("max_depth must be >= 0");
    if (s.min_samples_leaf < 1) bad("min_samples_leaf must be >= 1");
    if (s.max_features < 0) bad("max_features must be >= 0");
    if (s.n_estimators < 0) bad("n_estimators must be >= 0");
    if ((s.algorithm == Algorithm::RForest || s.algorithm == Algorithm::AdaBoost) && s.n_estimators < 1) {
        bad("n_estimators must be >= 1");
    }
    if (!(s.learning_rate > 0.0)) bad("learning_rate must be > 0");
    if (!(s.ridge > 0.0)) bad("ridge must be > 0");
}

void fit_linear(Regressor& m, const Dataset& d) {
    const auto n = static_cast<Eigen::Index>(d.size());
    const auto p = static_cast<Eigen::Index>(d.n_features);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(d.x.data(), n, p);
    const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), n);

    // Centering absorbs the intercept and keeps the Gram matrix well scaled.
    const Eigen::RowVectorXd xbar = X.colwise().mean();
    const double ybar = y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xbar;
    const Eigen::VectorXd yc = y.array() - ybar;
    Eigen::MatrixXd G = Xc.transpose() * Xc;
    const Eigen::VectorXd b = Xc.transpose() * yc;

    Eigen::VectorXd beta;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G);
    if (p == 0) {
        beta = Eigen::VectorXd(0);
    } else if (qr.rank() == p) {
        beta = qr.solve(b);
    } else {
        G.diagonal().array() += m.spec.ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw Error(ErrorCode::SingularSystem, "normal equations singular even with ridge fallback");
        }
        beta = ldlt.solve(b);
    }
    if (!beta.allFinite()) throw Error(ErrorCode::SingularSystem, "non-finite least-squares coefficients");
    m.coef.assign(beta.data(), beta.data() + p);
    m.intercept = ybar - (p == 0 ? 0.0 : xbar.dot(beta));
}

void fit_forest(Regressor& m, const Dataset& d, int threads) {
    const std::size_t n = d.size(), p = d.n_features;
    const auto trees = static_cast<std::size_t>(m.spec.n_estimators);
    TreeParams tp;
    tp.max_depth = m.spec.max_depth;
    tp.min_leaf = static_cast<std::size_t>(m.spec.min_samples_leaf);
    tp.max_features = m.spec.max_features > 0 ? static_cast<std::size_t>(m.spec.max_features)
                                              : std::max<std::size_t>(1, p / 3);
    m.trees.assign(trees, Tree{});

    // Each tree draws from its own derived stream; worker assignment never
    // touches the random state, so results are thread-count invariant.
    auto grow_tree = [&](std::size_t t) {
        Rng rng(derive_seed(m.spec.seed, t));
        std::vector<double> counts(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) counts[rng.index(n)] += 1.0;
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < n; ++i) {
            if (counts[i] > 0.0) rows.push_back(i);
        }
        TreeBuilder b(d, d.y, counts, tp, &rng);
        m.trees[t] = b.build(std::move(rows));
    };

    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
    if (workers == 1 || trees < 2) {
        for (std::size_t t = 0; t < trees; ++t) grow_tree(t);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, trees); ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t t = w; t < trees; t += workers) grow_tree(t);
        });
    }
    for (auto& th : pool) th.join();
}

void fit_gboost(Regressor& m, const Dataset& d) {
    const std::size_t n = d.size();
    m.intercept = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> f(n, m.intercept), r(n);
    TreeParams tp{m.spec.max_depth, static_cast<std::size_t>(m.spec.min_samples_leaf), 0};
    for (int round = 0; round < m.spec.n_estimators; ++round) {
        for (std::size_t i = 0; i < n; ++i) r[i] = d.y[i] - f[i];
        TreeBuilder b(d, r, {}, tp, nullptr);
        Tree t = b.build(all_rows(n));
        for (std::size_t i = 0; i < n; ++i) f[i] += m.spec.learning_rate * t.predict(d.row(i));
        m.trees.push_back(std::move(t));
    }
}

// AdaBoost.R2 with linear loss. Weak learners see the boosting weights
// directly (weighted CART) instead of a weighted resample.
void fit_adaboost(Regressor& m, const Dataset& d) {
    const std::size_t n = d.size();
    std::vector<double> w(n, 1.0 / static_cast<double>(n)), err(n);
    TreeParams tp{m.spec.max_depth, static_cast<std::size_t>(m.spec.min_samples_leaf), 0};
    for (int round = 0; round < m.spec.n_estimators; ++round) {
        TreeBuilder b(d, d.y, w, tp, nullptr);
        Tree t = b.build(all_rows(n));
        double emax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err[i] = std::abs(t.predict(d.row(i)) - d.y[i]);
            emax = std::max(emax, err[i]);
        }
        double loss = 0.0;
        if (emax > 0.0) {
            for (std::size_t i = 0; i < n; ++i) loss += w[i] * err[i] / emax;
        }
        if (loss <= 0.0) {
            // Perfect fit: unit weight, nothing left to boost.
            m.trees.push_back(std::move(t));
            m.tree_weights.push_back(1.0);
            return;
        }
        if (loss >= 0.5) {
            if (m.trees.empty()) {
                m.trees.push_back(std::move(t));
                m.tree_weights.push_back(1.0);
            }
            return;
        }
        const double beta = loss / (1.0 - loss);
        m.trees.push_back(std::move(t));
        m.tree_weights.push_back(std::log(1.0 / beta));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i] *= std::pow(beta, 1.0 - err[i] / emax);
            total += w[i];
        }
        for (auto& v : w) v /= total;
    }
}

}  // namespace

std::optional<Split> cart_best_split(const Dataset& d, std::span<const std::size_t> rows,
                                     std::span<const std::size_t> features, std::span<const double> weights,
                                     std::size_t min_samples_leaf) {
    if (!weights.empty() && weights.size() != d.size()) {
        throw Error(ErrorCode::LengthMismatch, "weights do not match dataset rows");
    }
    for (auto f : features) {
        if (f >= d.n_features) throw Error(ErrorCode::DimensionMismatch, "feature index out of range");
    }
    const auto c = search_split(d, d.y, weights, rows, features, std::max<std::size_t>(1, min_samples_leaf), false);
    if (!c) return std::nullopt;
    return Split{c->feature, c->threshold, c->gain};
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) throw Error(ErrorCode::LengthMismatch, "values and weights differ in length");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::ZeroTotalWeight, "weights sum to zero");
    std::vector<std::size_t> order = all_rows(values.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double cum = 0.0;
    for (auto i : order) {
        cum += weights[i];
        if (cum >= 0.5 * total) return values[i];
    }
    return values[order.back()];
}

Regressor fit(const ModelSpec& spec, const Dataset& train, int threads) {
    validate(spec);
    if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
    if (train.x.size() != train.size() * train.n_features) {
        throw Error(ErrorCode::DimensionMismatch, "design matrix size does not match rows x features");
    }
    Regressor m;
    m.spec = spec;
    m.n_features = train.n_features;
    switch (spec.algorithm) {
        case Algorithm::Linear: fit_linear(m, train); break;
        case Algorithm::Knn: m.neighbors = train; break;
        case Algorithm::DTree: {
            TreeParams tp{spec.max_depth, static_cast<std::size_t>(spec.min_samples_leaf), 0};
            TreeBuilder b(train, train.y, {}, tp, nullptr);
            m.trees.push_back(b.build(all_rows(train.size())));
            break;
        }
        case Algorithm::RForest: fit_forest(m, train, threads); break;
        case Algorithm::GBoost: fit_gboost(m, train); break;
        case Algorithm::AdaBoost: fit_adaboost(m, train); break;
    }
    return m;
}

double Regressor::predict(std::span<const double> x) const {
    if (x.size() != n_features) {
        throw Error(ErrorCode::DimensionMismatch,
                    "expected " + std::to_string(n_features) + " features, got " + std::to_string(x.size()));
    }
    switch (spec.algorithm) {
        case Algorithm::Linear: {
            double s = intercept;
            for (std::size_t j = 0; j < n_features; ++j) s += coef[j] * x[j];
            return s;
        }
        case Algorithm::Knn: {
            const std::size_t n = neighbors.size();
            std::vector<std::pair<double, std::size_t>> dist(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = neighbors.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j < n_features; ++j) s += (r[j] - x[j]) * (r[j] - x[j]);
                dist[i] = {s, i};
            }
            const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec.k), n);
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += neighbors.y[dist[i].second];
            return s / static_cast<double>(k);
        }
        case Algorithm::DTree: return trees.front().predict(x);
        case Algorithm::RForest: {
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(x);
            return s / static_cast<double>(trees.size());
        }
        case Algorithm::GBoost: {
            double s = intercept;
            for (const auto& t : trees) s += spec.learning_rate * t.predict(x);
            return s;
        }
        case Algorithm::AdaBoost: {
            std::vector<double> preds(trees.size());
            for (std::size_t i = 0; i < trees.size(); ++i) preds[i] = trees[i].predict(x);
            return weighted_median(preds, tree_weights);
        }
    }
    return 0.0;
}

std::vector<double> Regressor::predict(const Dataset& d) const {
    if (d.n_features != n_features) throw Error(ErrorCode::DimensionMismatch, "dataset feature count mismatch");
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = predict(d.row(i));
    return out;
}

nlohmann::ordered_json to_json(const ModelSpec& s) {
    nlohmann::ordered_json j;
    j["algorithm"] = algorithm_name(s.algorithm);
    j["seed"] = s.seed;
    j["k"] = s.k;
    j["max_depth"] = s.max_depth;
    j["min_samples_leaf"] = s.min_samples_leaf;
    j["n_estimators"] = s.n_estimators;
    j["max_features"] = s.max_features;
    j["learning_rate"] = s.learning_rate;
    j["ridge"] = s.ridge;
    return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.algorithm = parse_algorithm(get_field<std::string>(j, "algorithm"));
    s.seed = get_field<std::uint64_t>(j, "seed");
    s.k = get_field<int>(j, "k");
    s.max_depth = get_field<int>(j, "max_depth");
    s.min_samples_leaf = get_field<int>(j, "min_samples_leaf");
    s.n_estimators = get_field<int>(j, "n_estimators");
    s.max_features = get_field<int>(j, "max_features");
    s.learning_rate = get_field<double>(j, "learning_rate");
    s.ridge = get_field<double>(j, "ridge");
    validate(s);
    return s;
}

namespace {

nlohmann::ordered_json tree_json(const Tree& t) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
    }
    nlohmann::ordered_json j;
    j["feature"] = feature;
    j["threshold"] = threshold;
    j["left"] = left;
    j["right"] = right;
    j["value"] = value;
    return j;
}

Tree tree_from_json(const nlohmann::json& j, std::size_t n_features) {
    const auto feature = get_field<std::vector<int>>(j, "feature");
    const auto threshold = get_field<std::vector<double>>(j, "threshold");
    const auto left = get_field<std::vector<int>>(j, "left");
    const auto right = get_field<std::vector<int>>(j, "right");
    const auto value = get_field<std::vector<double>>(j, "value");
    const std::size_t n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
        throw Error(ErrorCode::ParseError, "tree node arrays are empty or ragged");
    }
    Tree t;
    for (std::size_t i = 0; i < n; ++i) {
        if (feature[i] >= 0) {
            // Children must come after the parent, which also rules out cycles.
            const auto in_range = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
            if (static_cast<std::size_t>(feature[i]) >= n_features || !in_range(left[i]) || !in_range(right[i])) {
                throw Error(ErrorCode::ParseError, "malformed tree node " + std::to_string(i));
            }
        }
        t.nodes.push_back(TreeNode{feature[i], threshold[i], left[i], right[i], value[i]});
    }
    return t;
}

}  // namespace

nlohmann::ordered_json to_json(const Regressor& m) {
    nlohmann::ordered_json state;
    switch (m.spec.algorithm) {
        case Algorithm::Linear:
            state["intercept"] = m.intercept;
            state["coef"] = m.coef;
            break;
        case Algorithm::Knn:
            state["x"] = m.neighbors.x;
            state["y"] = m.neighbors.y;
            break;
        case Algorithm::GBoost: state["initial"] = m.intercept; [[fallthrough]];
        default: {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& t : m.trees) arr.push_back(tree_json(t));
            state["trees"] = arr;
            if (m.spec.algorithm == Algorithm::AdaBoost) state["tree_weights"] = m.tree_weights;
        }
    }
    nlohmann::ordered_json j;
    j["format"] = "foodcal.model";
    j["version"] = 1;
    j["spec"] = to_json(m.spec);
    j["n_features"] = m.n_features;
    j["state"] = state;
    return j;
}

Regressor regressor_from_json(const nlohmann::json& j) {
    if (get_field<std::string>(j, "format") != "foodcal.model") throw Error(ErrorCode::ParseError, "not a model file");
    if (get_field<int>(j, "version") != 1) throw Error(ErrorCode::ParseError, "unsupported model version");
    Regressor m;
    m.spec = model_spec_from_json(get_field<nlohmann::json>(j, "spec"));
    m.n_features = get_field<std::size_t>(j, "n_features");
    const auto state = get_field<nlohmann::json>(j, "state");
    switch (m.spec.algorithm) {
        case Algorithm::Linear:
            m.intercept = get_field<double>(state, "intercept");
            m.coef = get_field<std::vector<double>>(state, "coef");
            if (m.coef.size() != m.n_features) throw Error(ErrorCode::ParseError, "coefficient count mismatch");
            break;
        case Algorithm::Knn:
            m.neighbors.n_features = m.n_features;
            m.neighbors.x = get_field<std::vector<double>>(state, "x");
            m.neighbors.y = get_field<std::vector<double>>(state, "y");
            if (m.neighbors.empty() || m.neighbors.x.size() != m.neighbors.y.size() * m.n_features) {
                throw Error(ErrorCode::ParseError, "neighbor table size mismatch");
            }
            break;
        default: {
            if (m.spec.algorithm == Algorithm::GBoost) m.intercept = get_field<double>(state, "initial");
            for (const auto& t : get_field<nlohmann::json>(state, "trees")) m.trees.push_back(tree_from_json(t, m.n_features));
            if (m.spec.algorithm == Algorithm::AdaBoost) {
                m.tree_weights = get_field<std::vector<double>>(state, "tree_weights");
                if (m.tree_weights.size() != m.trees.size()) throw Error(ErrorCode::ParseError, "tree weight count mismatch");
            }
            const bool need_trees = m.spec.algorithm != Algorithm::GBoost;
            if (need_trees && m.trees.empty()) throw Error(ErrorCode::ParseError, "model has no trees");
        }
    }
    return m;
}

}  // namespace foodcal
