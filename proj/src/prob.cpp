#include "prob.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "error.hpp"

namespace pv {

double standard_normal_cdf(double x) {
    return 0.5 * std::erfc(-x * M_SQRT1_2);
}

GaussianInput::GaussianInput(Eigen::VectorXd mean, CovarianceSpec cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.dim() != mean_.size())
        throw Error(ErrorCode::Dimension, "covariance size != mean length");
    if (cov_.diagonal) {
        if ((cov_.diag.array() <= 0.0).any())
            throw Error(ErrorCode::InvalidArgument,
                        "diagonal covariance entries must be positive");
        chol_ = cov_.diag.cwiseSqrt().asDiagonal();
        stddev_ = cov_.diag.cwiseSqrt();
    } else {
        if (!cov_.full.isApprox(cov_.full.transpose(), 1e-12))
            throw Error(ErrorCode::InvalidArgument, "covariance is not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(cov_.full);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::InvalidArgument,
                        "covariance is not positive definite");
        chol_ = llt.matrixL();
        stddev_ = cov_.full.diagonal().cwiseSqrt();
    }
}

void GaussianInput::sample_into(NormalSampler& sampler, Eigen::MatrixXd& out) const {
    sampler.fill(out);
    if (cov_.diagonal)
        out = (stddev_.asDiagonal() * out).colwise() + mean_;
    else
        out = (chol_ * out).colwise() + mean_;
}

TruncationDomain make_truncation_domain(const GaussianInput& gaussian, double z) {
    if (!(z > 0.0))
        throw Error(ErrorCode::InvalidArgument, "truncation z must be positive");
    TruncationDomain d;
    d.box.lo = gaussian.mean() - z * gaussian.stddev();
    d.box.hi = gaussian.mean() + z * gaussian.stddev();
    const double per_dim = std::erf(z * M_SQRT1_2); // P[|Z| <= z]
    if (gaussian.cov().diagonal) {
        d.delta = 1.0 - std::pow(per_dim, static_cast<double>(gaussian.dim()));
    } else {
        // Correlated components: union bound on the per-dimension tails.
        d.delta = std::min(1.0, gaussian.dim() * (1.0 - per_dim));
    }
    return d;
}

std::pair<LinearEvent, LinearEvent>
build_branch_events(const LinearBoundsSet& bounds, const ConstraintSet& constraints) {
    const LinearFunctionBundle& f = bounds.f_bundle();
    const Eigen::Index dim = f.lower_A.cols();
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(constraints.size());

    LinearEvent lower{Eigen::MatrixXd(rows, dim), Eigen::VectorXd(rows)};
    LinearEvent upper{Eigen::MatrixXd(rows, dim), Eigen::VectorXd(rows)};

    // f row: lower event requires lower_f(x) >= 0, upper event upper_f(x) >= 0.
    lower.P.row(0) = -f.lower_A.row(0);
    lower.q(0) = -f.lower_b(0);
    upper.P.row(0) = -f.upper_A.row(0);
    upper.q(0) = -f.upper_b(0);

    Eigen::Index r = 1;
    for (const auto& [key, sign] : constraints.entries()) {
        const auto [k, j] = key;
        if (k < 1 || k > static_cast<int>(bounds.per_layer.size()) - 1 ||
            j >= bounds.per_layer[k - 1].lower_A.rows())
            throw Error(ErrorCode::InvalidArgument,
                        "constraint (layer " + std::to_string(k) + ", neuron " +
                            std::to_string(j) + ") has no bound row");
        const LinearFunctionBundle& b = bounds.bundle(k);
        if (sign == SignConstraint::GeqZero) {
            // lower: lower_y >= 0; upper: upper_y >= 0.
            lower.P.row(r) = -b.lower_A.row(j);
            lower.q(r) = -b.lower_b(j);
            upper.P.row(r) = -b.upper_A.row(j);
            upper.q(r) = -b.upper_b(j);
        } else {
            // lower: upper_y <= 0; upper: lower_y <= 0.
            lower.P.row(r) = b.upper_A.row(j);
            lower.q(r) = b.upper_b(j);
            upper.P.row(r) = b.lower_A.row(j);
            upper.q(r) = b.lower_b(j);
        }
        ++r;
    }
    return {std::move(lower), std::move(upper)};
}

namespace {

constexpr std::int64_t kSampleBlock = 1 << 16;

} // namespace

std::vector<ProbEstimate> estimate_events_shared(std::span<const LinearEvent> events,
                                                 const GaussianInput& gaussian,
                                                 const TruncationDomain& domain,
                                                 std::int64_t n_samples,
                                                 std::uint64_t seed) {
    if (n_samples < 1)
        throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
    for (const LinearEvent& e : events)
        if (e.P.cols() != gaussian.dim() || e.q.size() != e.P.rows())
            throw Error(ErrorCode::Dimension, "event shape mismatch");

    NormalSampler sampler(seed);
    std::vector<std::int64_t> hits(events.size(), 0);
    Eigen::MatrixXd x;
    std::int64_t done = 0;
    while (done < n_samples) {
        const std::int64_t b = std::min(kSampleBlock, n_samples - done);
        x.resize(gaussian.dim(), b);
        gaussian.sample_into(sampler, x);

        Eigen::Array<bool, 1, Eigen::Dynamic> in_box(b);
        for (Eigen::Index c = 0; c < b; ++c)
            in_box(c) = (x.col(c).array() >= domain.box.lo.array()).all() &&
                        (x.col(c).array() <= domain.box.hi.array()).all();

        for (std::size_t e = 0; e < events.size(); ++e) {
            const LinearEvent& ev = events[e];
            if (ev.rows() == 0) {
                for (Eigen::Index c = 0; c < b; ++c)
                    hits[e] += in_box(c);
                continue;
            }
            const Eigen::MatrixXd v = (ev.P * x).colwise() + ev.q;
            for (Eigen::Index c = 0; c < b; ++c)
                hits[e] += in_box(c) && (v.col(c).array() <= 0.0).all();
        }
        done += b;
    }

    std::vector<ProbEstimate> out(events.size());
    for (std::size_t e = 0; e < events.size(); ++e)
        out[e] = ProbEstimate{static_cast<double>(hits[e]) /
                                  static_cast<double>(n_samples),
                              n_samples, seed};
    return out;
}

ProbEstimate estimate_event_probability(const LinearEvent& event,
                                        const GaussianInput& gaussian,
                                        const TruncationDomain& domain,
                                        std::int64_t n_samples,
                                        std::uint64_t seed) {
    const LinearEvent evs[] = {event};
    return estimate_events_shared(evs, gaussian, domain, n_samples, seed)[0];
}

BranchProbabilities bound_branch_probability(const LinearBoundsSet& bounds,
                                             const ConstraintSet& constraints,
                                             const GaussianInput& gaussian,
                                             const TruncationDomain& domain,
                                             std::int64_t n_samples,
                                             std::uint64_t seed) {
    auto [lower_event, upper_event] = build_branch_events(bounds, constraints);
    const LinearEvent evs[] = {lower_event, upper_event};
    auto estimates = estimate_events_shared(evs, gaussian, domain, n_samples, seed);
    BranchProbabilities out{estimates[0], estimates[1], std::move(lower_event),
                            std::move(upper_event)};
    if (out.lower.value > out.upper.value)
        throw Error(ErrorCode::Internal,
                    "event inclusion violated: lower estimate above upper");
    return out;
}

ProbEstimate uncertainty_level(const LinearBoundsSet& bounds, int layer, int neuron,
                               const GaussianInput& gaussian,
                               const TruncationDomain& domain,
                               std::int64_t n_samples, std::uint64_t seed) {
    if (layer < 1 || layer > static_cast<int>(bounds.per_layer.size()) - 1 ||
        neuron < 0 || neuron >= bounds.bundle(layer).lower_A.rows())
        throw Error(ErrorCode::InvalidArgument,
                    "uncertainty_level: neuron out of range");
    const LinearFunctionBundle& b = bounds.bundle(layer);
    // {upper_y >= 0, lower_y < 0} as a two-row event.
    LinearEvent ev{Eigen::MatrixXd(2, b.lower_A.cols()), Eigen::VectorXd(2)};
    ev.P.row(0) = -b.upper_A.row(neuron);
    ev.q(0) = -b.upper_b(neuron);
    ev.P.row(1) = b.lower_A.row(neuron);
    ev.q(1) = b.lower_b(neuron);
    return estimate_event_probability(ev, gaussian, domain, n_samples, seed);
}

double bernstein_confidence(std::span<const double> branch_estimates,
                            std::int64_t n_samples, double eta,
                            CertificateSide side) {
    KahanSum sum, var;
    for (double p : branch_estimates) {
        sum.add(p);
        var.add(p * (1.0 - p));
    }
    const double eps = side == CertificateSide::Lower ? sum.value() - eta
                                                      : eta - sum.value();
    if (eps < 0.0)
        throw Error(ErrorCode::Precondition,
                    side == CertificateSide::Lower
                        ? "lower certificate requested but sum < eta"
                        : "upper certificate requested but sum >= eta");
    if (eps == 0.0)
        return 0.0;
    const double v = var.value();
    const double exponent = static_cast<double>(n_samples) * eps * eps /
                            (2.0 * v + (2.0 / 3.0) * eps);
    return 1.0 - std::exp(-exponent);
}

} // namespace pv
