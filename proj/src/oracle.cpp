#include "oracle.hpp"

#include <cmath>
#include <thread>

#include "error.hpp"
#include "rng.hpp"

namespace pv {

namespace {

constexpr std::int64_t kBlock = 1 << 16;

std::int64_t count_hits(const Network& network, const GaussianInput& gaussian,
                        const ConstraintSet* constraints, std::int64_t n_samples,
                        std::uint64_t worker_seed) {
    NormalSampler sampler(worker_seed);
    const bool need_hidden = constraints && !constraints->empty();
    std::int64_t hits = 0;
    Eigen::MatrixXd x;
    std::int64_t done = 0;
    while (done < n_samples) {
        const std::int64_t b = std::min(kBlock, n_samples - done);
        x.resize(gaussian.dim(), b);
        gaussian.sample_into(sampler, x);
        if (!need_hidden) {
            const Eigen::MatrixXd out = network.forward_batch(x);
            hits += (out.row(0).array() > 0.0).count();
        } else {
            const std::vector<Eigen::MatrixXd> pre = network.preactivation_batch(x);
            Eigen::Array<bool, Eigen::Dynamic, 1> ok =
                (pre.back().row(0).array() > 0.0).transpose();
            for (const auto& [key, sign] : constraints->entries()) {
                const auto [k, j] = key;
                if (k < 1 || k >= network.depth() || j < 0 || j >= network.width(k))
                    throw Error(ErrorCode::InvalidArgument,
                                "oracle constraint on nonexistent neuron");
                if (sign == SignConstraint::GeqZero)
                    ok = ok && (pre[k - 1].row(j).array() >= 0.0).transpose();
                else
                    ok = ok && (pre[k - 1].row(j).array() < 0.0).transpose();
            }
            hits += ok.count();
        }
        done += b;
    }
    return hits;
}

} // namespace

OracleEstimate oracle_probability(const Network& network,
                                  const GaussianInput& gaussian,
                                  const ConstraintSet* constraints,
                                  std::int64_t n_samples, std::uint64_t seed,
                                  int workers) {
    if (n_samples < 10000)
        throw Error(ErrorCode::InvalidArgument,
                    "oracle requires at least 10^4 samples");
    if (network.output_dim() != 1)
        throw Error(ErrorCode::InvalidArgument, "oracle requires a scalar network");
    if (workers < 1)
        workers = 1;
    const int w = static_cast<int>(
        std::min<std::int64_t>(workers, std::max<std::int64_t>(1, n_samples / kBlock + 1)));

    std::vector<std::int64_t> counts(w, 0);
    std::vector<std::int64_t> shares(w, n_samples / w);
    for (int i = 0; i < static_cast<int>(n_samples % w); ++i)
        ++shares[i];

    if (w == 1) {
        counts[0] = count_hits(network, gaussian, constraints, n_samples,
                               mix_seed(seed, static_cast<std::uint64_t>(
                                                  SeedPurpose::OracleWorker),
                                        0));
    } else {
        std::vector<std::thread> threads;
        threads.reserve(w);
        std::vector<std::exception_ptr> errors(w);
        for (int i = 0; i < w; ++i)
            threads.emplace_back([&, i] {
                try {
                    counts[i] = count_hits(
                        network, gaussian, constraints, shares[i],
                        mix_seed(seed,
                                 static_cast<std::uint64_t>(SeedPurpose::OracleWorker),
                                 static_cast<std::uint64_t>(i)));
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        for (std::thread& t : threads)
            t.join();
        for (const std::exception_ptr& e : errors)
            if (e)
                std::rethrow_exception(e);
    }

    std::int64_t hits = 0;
    for (std::int64_t c : counts)
        hits += c;
    OracleEstimate est;
    est.value = static_cast<double>(hits) / static_cast<double>(n_samples);
    est.n_samples = n_samples;
    est.std_error =
        std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(n_samples));
    return est;
}

PatternEnumeration enumerate_patterns(const Network& network, const InputBox& domain,
                                      std::int64_t n_samples, std::uint64_t seed) {
    if (domain.lo.size() != network.input_dim() ||
        domain.hi.size() != network.input_dim())
        throw Error(ErrorCode::Dimension, "box size != network input width");

    // Uniform box samples; a neuron whose exact preactivation sign varies
    // across the batch is enumerated.
    std::mt19937_64 engine(mix_seed(seed, 0x70617474ULL)); // "patt"
    auto uniform01 = [&engine] {
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    };

    const int dim = network.input_dim();
    std::vector<std::pair<int, int>> neurons;
    std::vector<std::pair<int, int>> all_hidden;
    for (int k = 1; k < network.depth(); ++k)
        for (int j = 0; j < network.width(k); ++j)
            all_hidden.emplace_back(k, j);

    std::vector<std::vector<bool>> sample_signs;
    sample_signs.reserve(static_cast<std::size_t>(n_samples));
    const std::int64_t block = 4096;
    Eigen::MatrixXd xs;
    std::int64_t done = 0;
    while (done < n_samples) {
        const std::int64_t b = std::min(block, n_samples - done);
        xs.resize(dim, b);
        for (Eigen::Index c = 0; c < b; ++c)
            for (int r = 0; r < dim; ++r)
                xs(r, c) = domain.lo(r) + uniform01() * (domain.hi(r) - domain.lo(r));
        const std::vector<Eigen::MatrixXd> pre = network.preactivation_batch(xs);
        for (Eigen::Index c = 0; c < b; ++c) {
            std::vector<bool> signs(all_hidden.size());
            for (std::size_t i = 0; i < all_hidden.size(); ++i) {
                const auto [k, j] = all_hidden[i];
                signs[i] = pre[k - 1](j, c) >= 0.0;
            }
            sample_signs.push_back(std::move(signs));
        }
        done += b;
    }

    std::vector<std::size_t> varying;
    for (std::size_t i = 0; i < all_hidden.size(); ++i) {
        bool saw_pos = false;
        bool saw_neg = false;
        for (const auto& s : sample_signs) {
            if (s[i])
                saw_pos = true;
            else
                saw_neg = true;
            if (saw_pos && saw_neg)
                break;
        }
        if (saw_pos && saw_neg)
            varying.push_back(i);
    }
    if (varying.size() > 22)
        throw Error(ErrorCode::Precondition,
                    "too many sign-varying neurons to enumerate: " +
                        std::to_string(varying.size()) + " > 22");

    for (std::size_t i : varying)
        neurons.push_back(all_hidden[i]);

    // Hit counts per full sign assignment (bit set = nonnegative).
    const std::size_t u = varying.size();
    std::vector<std::int64_t> hits(std::size_t{1} << u, 0);
    for (const auto& s : sample_signs) {
        std::uint64_t mask = 0;
        for (std::size_t b = 0; b < u; ++b)
            if (s[varying[b]])
                mask |= (std::uint64_t{1} << b);
        ++hits[mask];
    }

    PatternEnumeration out;
    out.neurons = neurons;
    out.patterns.reserve(hits.size());
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << u); ++mask) {
        ConstraintSet cs;
        for (std::size_t b = 0; b < u; ++b) {
            const auto [k, j] = neurons[b];
            cs.add(k, j,
                   (mask >> b) & 1 ? SignConstraint::GeqZero
                                   : SignConstraint::LtZero);
        }
        out.patterns.emplace_back(std::move(cs), hits[mask] > 0);
    }
    return out;
}

} // namespace pv
