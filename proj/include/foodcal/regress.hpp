#pragma once

#include "foodcal/dataset.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace foodcal {

enum class Algorithm { Linear, Knn, DTree, RForest, GBoost, AdaBoost };

const char* algorithm_name(Algorithm a);
// Accepts canonical names and the short forms lr, dt, rf, gb, ada.
Algorithm parse_algorithm(const std::string& name);

struct ModelSpec {
    Algorithm algorithm = Algorithm::RForest;
    std::uint64_t seed = 0;
    int k = 5;                  // knn
    int max_depth = 0;          // tree learners; 0 = unlimited
    int min_samples_leaf = 1;   // tree learners
    int n_estimators = 100;     // rforest trees, gboost rounds, adaboost max rounds
    int max_features = 0;       // rforest; 0 = max(1, floor(p / 3))
    double learning_rate = 0.1; // gboost
    double ridge = 1e-8;        // linear fallback

    // Defaults per algorithm: dtree unlimited depth; gboost 100 rounds of
    // depth 3; adaboost 50 rounds of depth 3; rforest 100 full-depth trees.
    static ModelSpec defaults(Algorithm a, std::uint64_t seed = 0);
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    double predict(std::span<const double> x) const;
    int depth() const;
};

struct Regressor {
    ModelSpec spec;
    std::size_t n_features = 0;
    double intercept = 0.0;         // linear intercept; gboost initial prediction
    std::vector<double> coef;       // linear
    Dataset neighbors;              // knn
    std::vector<Tree> trees;        // dtree, rforest, gboost, adaboost
    std::vector<double> tree_weights;  // adaboost ln(1/beta)

    // Throws DimensionMismatch.
    double predict(std::span<const double> x) const;
    std::vector<double> predict(const Dataset& d) const;
};

// Throws EmptyDataset, InvalidArgument, SingularSystem (linear, when the
// ridge fallback also fails). Thread count only affects rforest wall time.
Regressor fit(const ModelSpec& spec, const Dataset& train, int threads = 1);

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;  // weighted SSE reduction
};

// Best variance-reducing split over `rows` restricted to `features`.
// Candidates are midpoints of consecutive distinct values; ties go to the lower
// feature index, then the lower threshold. Empty weights mean unit weights.
std::optional<Split> cart_best_split(const Dataset& d, std::span<const std::size_t> rows,
                                     std::span<const std::size_t> features, std::span<const double> weights = {},
                                     std::size_t min_samples_leaf = 1);

// Smallest value whose cumulative weight (ascending value order) reaches half
// the total. Throws ZeroTotalWeight, LengthMismatch.
double weighted_median(std::span<const double> values, std::span<const double> weights);

nlohmann::ordered_json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Versioned layout {"format": "foodcal.model", "version": 1, "spec", "n_features", "state"}.
nlohmann::ordered_json to_json(const Regressor& model);
Regressor regressor_from_json(const nlohmann::json& j);

}  // namespace foodcal
