#ifndef PROBVERIF_SPLIT_HPP
#define PROBVERIF_SPLIT_HPP

#include <cstdint>
#include <map>
#include <utility>

#include "lirpa.hpp"
#include "prob.hpp"

namespace pv {

struct SplitChoice {
    int layer = 0;
    int neuron = 0;
    double uncertainty = 0.0;
    double score = 0.0; // 0 for the ordered strategy
};

// Lowest-index unstable neuron of the earliest layer containing one. Its
// bundle rows are exact (no relaxation precedes it), so its uncertainty
// level is zero by construction; asserted, not estimated.
SplitChoice select_ordered(const LinearBoundsSet& bounds,
                           const ConstraintSet& constraints);

// Relaxation-intercept scores |lambda_j| * u_j * (-l_j) / (u_j - l_j) for
// every unstable neuron, from the lower-bound backward pass coefficients.
std::map<std::pair<int, int>, double> babsr_scores(const LinearBoundsSet& bounds,
                                                   const ConstraintSet& constraints,
                                                   const Network& network);

// Walk unstable neurons by descending score (ties by layer then index) and
// return the first whose uncertainty level is at most `threshold`.
// Terminates because the ordered-strategy neuron has uncertainty zero.
SplitChoice select_babsr_prob(const LinearBoundsSet& bounds,
                              const ConstraintSet& constraints,
                              const Network& network,
                              const GaussianInput& gaussian,
                              const TruncationDomain& domain, double threshold,
                              std::int64_t n_samples, std::uint64_t seed);

} // namespace pv

#endif
