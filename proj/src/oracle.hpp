#ifndef PROBVERIF_ORACLE_HPP
#define PROBVERIF_ORACLE_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "lirpa.hpp"
#include "model.hpp"
#include "prob.hpp"

namespace pv {

// Ground-truth estimate from direct sampling of the exact network; no
// linear relaxation anywhere in this module.
struct OracleEstimate {
    double value = 0.0;
    std::int64_t n_samples = 0;
    double std_error = 0.0; // sqrt(value (1 - value) / n_samples)
};

// Direct-sampling estimate of P[f(X) > 0, C] under the *untruncated*
// Gaussian, with constraints checked on exact preactivation values.
// Deterministic given (seed, workers): worker w draws its share from a
// derived seed and counts are merged in worker order.
OracleEstimate oracle_probability(const Network& network,
                                  const GaussianInput& gaussian,
                                  const ConstraintSet* constraints,
                                  std::int64_t n_samples, std::uint64_t seed,
                                  int workers = 1);

// All full sign assignments over the neurons whose preactivation sign
// varies across a sampled batch, paired with a feasibility hint (false =
// zero hits among the samples, possibly empty; never dropped). The
// assignments partition the input space, so constrained probabilities over
// them sum to the unconstrained probability.
struct PatternEnumeration {
    std::vector<std::pair<ConstraintSet, bool>> patterns;
    std::vector<std::pair<int, int>> neurons; // enumerated (layer, neuron)
};

PatternEnumeration enumerate_patterns(const Network& network, const InputBox& domain,
                                      std::int64_t n_samples = 100000,
                                      std::uint64_t seed = 0);

} // namespace pv

#endif
