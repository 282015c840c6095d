#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace foodcal {

// Dense row-major design matrix plus regression targets.
struct Dataset {
    std::size_t n_features = 0;
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return y.size(); }
    bool empty() const { return y.empty(); }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * n_features, n_features}; }

    void add(std::span<const double> features, double target) {
        x.insert(x.end(), features.begin(), features.end());
        y.push_back(target);
    }
};

}  // namespace foodcal
