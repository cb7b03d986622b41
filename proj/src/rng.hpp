#ifndef PROBVERIF_RNG_HPP
#define PROBVERIF_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace pv {

// All randomized estimators in this library derive their streams from a
// single run seed through this mixer, so results are reproducible from
// (seed, config) alone and independent streams never alias.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = splitmix64(seed ^ 0xA0761D6478BD642FULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

// Stream purposes mixed into per-branch seeds.
enum class SeedPurpose : std::uint64_t {
    BranchEstimate = 1,
    UncertaintyEstimate = 2,
    OracleWorker = 3,
};

// Deterministic standard-normal source. Box-Muller on top of mt19937_64;
// self-contained so estimates do not depend on the standard library's
// distribution internals.
class NormalSampler {
  public:
    explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Fills column-major storage with the same stream next() would
    // produce, generating Box-Muller pairs straight into the buffer.
    void fill(Eigen::MatrixXd& m) {
        double* p = m.data();
        const Eigen::Index n = m.size();
        Eigen::Index i = 0;
        if (have_spare_ && n > 0) {
            p[0] = spare_;
            have_spare_ = false;
            i = 1;
        }
        for (; i + 1 < n; i += 2) {
            const double u1 = uniform_open0();
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double theta = 2.0 * M_PI * u2;
            p[i] = r * std::cos(theta);
            p[i + 1] = r * std::sin(theta);
        }
        if (i < n)
            p[i] = next();
    }

  private:
    double uniform() { // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform_open0() { // (0, 1]
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Kahan-compensated accumulator for bound aggregation.
class KahanSum {
  public:
    void add(double x) {
        const double y = x - compensation_;
        const double t = sum_ + y;
        compensation_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

} // namespace pv

#endif
