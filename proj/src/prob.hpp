#ifndef PROBVERIF_PROB_HPP
#define PROBVERIF_PROB_HPP

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lirpa.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace pv {

// Gaussian input distribution with a precomputed Cholesky factor for
// sampling. Full covariances must be positive definite.
class GaussianInput {
  public:
    GaussianInput(Eigen::VectorXd mean, CovarianceSpec cov);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const CovarianceSpec& cov() const { return cov_; }
    const Eigen::MatrixXd& cholesky_factor() const { return chol_; }
    const Eigen::VectorXd& stddev() const { return stddev_; }

    // Fills `out` (dim x B) with samples, one per column, consuming
    // dim * B normal draws from `sampler` in column-major order.
    void sample_into(NormalSampler& sampler, Eigen::MatrixXd& out) const;

  private:
    Eigen::VectorXd mean_;
    CovarianceSpec cov_;
    Eigen::MatrixXd chol_;   // lower triangular, chol_ * chol_^T = cov
    Eigen::VectorXd stddev_; // sqrt of the covariance diagonal
};

// Bounded box D = [mean - z s, mean + z s] per dimension together with the
// mass delta of its complement. Exact for diagonal covariance; for full
// covariance delta is a union (Bonferroni) upper bound, which keeps the
// upper probability bound sound.
struct TruncationDomain {
    InputBox box;
    double delta = 0.0;
};

TruncationDomain make_truncation_domain(const GaussianInput& gaussian, double z);

// The event {P x + q <= 0} (all rows).
struct LinearEvent {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;

    int rows() const { return static_cast<int>(P.rows()); }
    bool operator==(const LinearEvent& other) const {
        return P.rows() == other.P.rows() && P.cols() == other.P.cols() &&
               (P.array() == other.P.array()).all() &&
               (q.array() == other.q.array()).all();
    }
};

struct ProbEstimate {
    double value = 0.0;
    std::int64_t sample_count = 0;
    std::uint64_t rng_seed = 0;
};

// Assemble the two linear events bounding P[f(X) > 0, C] from a branch's
// bounds. Row order: the f row first, then one row per constraint in
// (layer, neuron) ascending order. The lower event under-approximates the
// exact event, the upper event over-approximates it (on the box).
std::pair<LinearEvent, LinearEvent>
build_branch_events(const LinearBoundsSet& bounds, const ConstraintSet& constraints);

// Monte Carlo estimate of P[event and X in box]. Samples falling outside
// the box count against the event; deterministic given the seed.
ProbEstimate estimate_event_probability(const LinearEvent& event,
                                        const GaussianInput& gaussian,
                                        const TruncationDomain& domain,
                                        std::int64_t n_samples,
                                        std::uint64_t seed);

// Shared-sample estimates for several events at once: all events are
// evaluated on the identical sample stream that a lone
// estimate_event_probability call with this seed would consume.
std::vector<ProbEstimate> estimate_events_shared(std::span<const LinearEvent> events,
                                                 const GaussianInput& gaussian,
                                                 const TruncationDomain& domain,
                                                 std::int64_t n_samples,
                                                 std::uint64_t seed);

struct BranchProbabilities {
    ProbEstimate lower;
    ProbEstimate upper;
    LinearEvent lower_event;
    LinearEvent upper_event;
};

// Build both events and estimate them on the same sample batch. Shared
// samples plus event inclusion make lower.value <= upper.value exact, not
// statistical. The truncation deficit delta is *not* folded in here; the
// engine charges it once to the global upper bound.
BranchProbabilities bound_branch_probability(const LinearBoundsSet& bounds,
                                             const ConstraintSet& constraints,
                                             const GaussianInput& gaussian,
                                             const TruncationDomain& domain,
                                             std::int64_t n_samples,
                                             std::uint64_t seed);

// Uncertainty level of preactivation (layer, neuron): the mass where its
// upper linear bound is nonnegative while its lower linear bound is
// negative, within the box.
ProbEstimate uncertainty_level(const LinearBoundsSet& bounds, int layer, int neuron,
                               const GaussianInput& gaussian,
                               const TruncationDomain& domain,
                               std::int64_t n_samples, std::uint64_t seed);

enum class CertificateSide { Lower, Upper };

// Bernstein certificate for an aggregated verdict: confidence that the true
// bound sum clears eta, given per-branch empirical estimates each made with
// n_samples draws. Side Lower requires sum >= eta, side Upper requires
// sum < eta.
double bernstein_confidence(std::span<const double> branch_estimates,
                            std::int64_t n_samples, double eta,
                            CertificateSide side);

double standard_normal_cdf(double x);

} // namespace pv

#endif
