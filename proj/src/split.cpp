#include "split.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"

namespace pv {

SplitChoice select_ordered(const LinearBoundsSet& bounds,
                           const ConstraintSet& constraints) {
    const int hidden_layers = static_cast<int>(bounds.per_layer.size()) - 1;
    for (int k = 1; k <= hidden_layers; ++k) {
        const int width = static_cast<int>(bounds.concrete_lower[k - 1].size());
        for (int j = 0; j < width; ++j) {
            if (!is_unstable(bounds, constraints, k, j))
                continue;
            if (!bundle_rows_identical(bounds, k, j))
                throw Error(ErrorCode::Internal,
                            "ordered strategy: chosen neuron has relaxed bounds");
            return SplitChoice{k, j, 0.0, 0.0};
        }
    }
    throw Error(ErrorCode::Precondition, "no unstable preactivation to split on");
}

std::map<std::pair<int, int>, double> babsr_scores(const LinearBoundsSet& bounds,
                                                   const ConstraintSet& constraints,
                                                   const Network& network) {
    std::map<std::pair<int, int>, double> scores;
    const int hidden_layers = network.depth() - 1;
    if (static_cast<int>(bounds.f_lower_coeffs.size()) != hidden_layers)
        throw Error(ErrorCode::Internal, "bounds missing backward coefficients");
    for (int k = 1; k <= hidden_layers; ++k) {
        const Eigen::RowVectorXd& lambda = bounds.f_lower_coeffs[k - 1];
        for (int j = 0; j < network.width(k); ++j) {
            if (!is_unstable(bounds, constraints, k, j))
                continue;
            const double l = bounds.lower(k, j);
            const double u = bounds.upper(k, j);
            scores[{k, j}] = std::abs(lambda(j)) * (u * -l) / (u - l);
        }
    }
    return scores;
}

SplitChoice select_babsr_prob(const LinearBoundsSet& bounds,
                              const ConstraintSet& constraints,
                              const Network& network,
                              const GaussianInput& gaussian,
                              const TruncationDomain& domain, double threshold,
                              std::int64_t n_samples, std::uint64_t seed) {
    const auto scores = babsr_scores(bounds, constraints, network);
    if (scores.empty())
        throw Error(ErrorCode::Precondition, "no unstable preactivation to split on");

    // Descending score, ties by (layer, neuron) ascending. The map already
    // iterates in (layer, neuron) order, so a stable sort keeps that order
    // within equal scores.
    std::vector<std::pair<std::pair<int, int>, double>> order(scores.begin(),
                                                              scores.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    for (const auto& [key, score] : order) {
        const auto [k, j] = key;
        // Exact rows mean the two-row event is empty: uncertainty 0.
        if (bundle_rows_identical(bounds, k, j))
            return SplitChoice{k, j, 0.0, score};
        const ProbEstimate est =
            uncertainty_level(bounds, k, j, gaussian, domain, n_samples, seed);
        if (est.value <= threshold)
            return SplitChoice{k, j, est.value, score};
    }
    // Unreachable: the ordered-strategy neuron always qualifies.
    const SplitChoice fallback = select_ordered(bounds, constraints);
    return fallback;
}

} // namespace pv
