#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "error.hpp"
#include "lirpa.hpp"
#include "test_util.hpp"

using namespace pv;
using testutil::random_network;
using testutil::random_vector;

namespace {

InputBox unit_box(int dim, double radius = 1.0) {
    return {Eigen::VectorXd::Constant(dim, -radius),
            Eigen::VectorXd::Constant(dim, radius)};
}

// Uniform box samples, deterministic.
Eigen::MatrixXd box_samples(const InputBox& box, int count, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    auto u01 = [&engine] {
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    };
    Eigen::MatrixXd x(box.lo.size(), count);
    for (int c = 0; c < count; ++c)
        for (Eigen::Index r = 0; r < box.lo.size(); ++r)
            x(r, c) = box.lo(r) + u01() * (box.hi(r) - box.lo(r));
    return x;
}

bool bundles_bitwise_equal(const LinearFunctionBundle& a,
                           const LinearFunctionBundle& b) {
    return (a.lower_A.array() == b.lower_A.array()).all() &&
           (a.lower_b.array() == b.lower_b.array()).all() &&
           (a.upper_A.array() == b.upper_A.array()).all() &&
           (a.upper_b.array() == b.upper_b.array()).all();
}

// All hidden-neuron signs of x as a full constraint set.
ConstraintSet signs_at(const Network& net, const Eigen::VectorXd& x) {
    ConstraintSet cs;
    for (int k = 1; k < net.depth(); ++k) {
        const Eigen::VectorXd y = net.preactivation(x, k);
        for (int j = 0; j < net.width(k); ++j)
            cs.add(k, j, y(j) >= 0.0 ? SignConstraint::GeqZero
                                     : SignConstraint::LtZero);
    }
    return cs;
}

} // namespace

TEST_CASE("relax_relu: stable and constrained pieces") {
    auto r = relax_relu(2.0, 5.0, std::nullopt);
    CHECK(r.lower_slope == 1.0);
    CHECK(r.lower_intercept == 0.0);
    CHECK(r.upper_slope == 1.0);
    CHECK(r.upper_intercept == 0.0);

    r = relax_relu(-5.0, -2.0, std::nullopt);
    CHECK(r.lower_slope == 0.0);
    CHECK(r.upper_slope == 0.0);

    // The constraint decides even when the interval says otherwise.
    r = relax_relu(-5.0, -2.0, SignConstraint::GeqZero);
    CHECK(r.lower_slope == 1.0);
    CHECK(r.upper_slope == 1.0);
    r = relax_relu(2.0, 5.0, SignConstraint::LtZero);
    CHECK(r.upper_slope == 0.0);

    CHECK_THROWS_AS(relax_relu(1.0, -1.0, std::nullopt), Error);
}

TEST_CASE("relax_relu: unstable examples and sandwich") {
    auto r = relax_relu(-1.0, 1.0, std::nullopt);
    CHECK(r.upper_slope == doctest::Approx(0.5));
    CHECK(r.upper_intercept == doctest::Approx(0.5));
    CHECK(r.lower_slope == 1.0); // u >= -l tie goes to 1

    auto r2 = relax_relu(-3.0, 1.0, std::nullopt);
    CHECK(r2.upper_slope == doctest::Approx(0.25));
    CHECK(r2.upper_intercept == doctest::Approx(0.75));
    CHECK(r2.lower_slope == 0.0);

    // Grid sandwich: lower(y) <= relu(y) <= upper(y) on [l, u].
    for (const auto& [l, u] : std::vector<std::pair<double, double>>{
             {-1.0, 1.0}, {-3.0, 1.0}, {-0.25, 2.0}, {-2.0, 0.125}}) {
        const auto lines = relax_relu(l, u, std::nullopt);
        for (int i = 0; i <= 1000; ++i) {
            const double y = l + (u - l) * i / 1000.0;
            const double relu = std::max(0.0, y);
            CHECK(lines.lower_slope * y + lines.lower_intercept <= relu + 1e-12);
            CHECK(lines.upper_slope * y + lines.upper_intercept >= relu - 1e-12);
        }
    }
}

TEST_CASE("affine network needs no relaxation") {
    const Network net = testutil::scalar_affine_net(2.0, -1.0);
    const LinearBoundsSet b =
        compute_linear_bounds(net, {Eigen::VectorXd::Constant(1, 0.0),
                                    Eigen::VectorXd::Constant(1, 1.0)},
                              {});
    CHECK(b.f_bundle().lower_A(0, 0) == 2.0);
    CHECK(b.f_bundle().upper_A(0, 0) == 2.0);
    CHECK(b.f_bundle().lower_b(0) == -1.0);
    CHECK(b.f_bundle().upper_b(0) == -1.0);
    CHECK(b.lower(1, 0) == -1.0); // 2*0 - 1
    CHECK(b.upper(1, 0) == 1.0);  // 2*1 - 1
}

TEST_CASE("forced-active relu propagates as identity") {
    AffineLayer l1;
    l1.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
    l1.bias = Eigen::VectorXd::Zero(1);
    AffineLayer l2 = l1;
    const Network net({l1, l2}); // f = relu(x)
    ConstraintSet cs;
    cs.add(1, 0, SignConstraint::GeqZero);
    const LinearBoundsSet b = compute_linear_bounds(net, unit_box(1), cs);
    CHECK(b.f_bundle().lower_A(0, 0) == 1.0);
    CHECK(b.f_bundle().upper_A(0, 0) == 1.0);
    CHECK(b.f_bundle().lower_b(0) == 0.0);
    CHECK(b.f_bundle().upper_b(0) == 0.0);
    CHECK(b.lower(1, 0) == 0.0); // clamped from -1
    CHECK(b.upper(1, 0) == 1.0);
}

TEST_CASE("constraint on a nonexistent neuron") {
    const Network net = random_network({2, 3, 1}, 1);
    ConstraintSet cs;
    cs.add(1, 7, SignConstraint::GeqZero);
    CHECK_THROWS_AS(compute_linear_bounds(net, unit_box(2), cs), Error);
    ConstraintSet cs2;
    cs2.add(2, 0, SignConstraint::GeqZero); // layer 2 = output layer here
    CHECK_THROWS_AS(compute_linear_bounds(net, unit_box(2), cs2), Error);
}

TEST_CASE("sampling soundness under satisfied constraints") {
    // Random nets, random boxes, random constraint subsets drawn from an
    // anchor point's true signs; every sampled point that satisfies the
    // constraints must respect the layer-conditional sandwich.
    std::mt19937_64 pick(424242);
    int checked_points = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Network net = random_network({2, 4, 4, 1}, 9000 + trial);
        const InputBox box = unit_box(2, 0.5 + 0.1 * (trial % 5));
        const Eigen::MatrixXd xs = box_samples(box, 400, 555 + trial);

        // Anchor signs -> random subset as constraints.
        const Eigen::VectorXd anchor = xs.col(0);
        const ConstraintSet full = signs_at(net, anchor);
        ConstraintSet cs;
        for (const auto& [key, sign] : full.entries())
            if (pick() % 3 == 0)
                cs.add(key.first, key.second, sign);

        const LinearBoundsSet b = compute_linear_bounds(net, box, cs);
        for (int c = 0; c < xs.cols(); ++c) {
            const Eigen::VectorXd x = xs.col(c);
            bool satisfies = true;
            for (const auto& [key, sign] : cs.entries()) {
                const double y = net.preactivation(x, key.first)(key.second);
                if (sign == SignConstraint::GeqZero ? y < 0.0 : y >= 0.0) {
                    satisfies = false;
                    break;
                }
            }
            if (!satisfies)
                continue;
            ++checked_points;
            for (int k = 1; k <= net.depth(); ++k) {
                const Eigen::VectorXd y = net.preactivation(x, k);
                const LinearFunctionBundle& bd = b.bundle(k);
                const Eigen::VectorXd lo = bd.lower_A * x + bd.lower_b;
                const Eigen::VectorXd hi = bd.upper_A * x + bd.upper_b;
                for (Eigen::Index j = 0; j < y.size(); ++j) {
                    CHECK(lo(j) <= y(j) + 1e-9);
                    CHECK(hi(j) >= y(j) - 1e-9);
                }
            }
        }
    }
    CHECK(checked_points > 1000);
}

TEST_CASE("layer-k bounds need only the prefix constraints satisfied") {
    // Points that satisfy constraints up to layer k-1 but may violate later
    // ones must still be inside the layer-k sandwich.
    const Network net = random_network({2, 4, 4, 1}, 333);
    const InputBox box = unit_box(2);
    const Eigen::MatrixXd xs = box_samples(box, 500, 999);
    const ConstraintSet full = signs_at(net, xs.col(0));
    const LinearBoundsSet b = compute_linear_bounds(net, box, full);

    int prefix_only = 0;
    for (int c = 0; c < xs.cols(); ++c) {
        const Eigen::VectorXd x = xs.col(c);
        bool l1_ok = true;
        for (const auto& [j, sign] : full.layer_constraints(1)) {
            const double y = net.preactivation(x, 1)(j);
            if (sign == SignConstraint::GeqZero ? y < 0.0 : y >= 0.0)
                l1_ok = false;
        }
        if (!l1_ok)
            continue;
        const Eigen::VectorXd y2 = net.preactivation(x, 2);
        const LinearFunctionBundle& b2 = b.bundle(2);
        const Eigen::VectorXd lo = b2.lower_A * x + b2.lower_b;
        const Eigen::VectorXd hi = b2.upper_A * x + b2.upper_b;
        for (Eigen::Index j = 0; j < y2.size(); ++j) {
            CHECK(lo(j) <= y2(j) + 1e-9);
            CHECK(hi(j) >= y2(j) - 1e-9);
        }
        ++prefix_only;
    }
    CHECK(prefix_only > 50);
}

TEST_CASE("intermediate bounds: single pass-through neuron") {
    AffineLayer l1;
    l1.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
    l1.bias = Eigen::VectorXd::Zero(1);
    AffineLayer l2 = l1;
    const Network net({l1, l2});
    const auto [lo, hi] = compute_intermediate_bounds(net, unit_box(1), {});
    REQUIRE(lo.size() == 1);
    CHECK(lo[0](0) == -1.0);
    CHECK(hi[0](0) == 1.0);
}

TEST_CASE("intermediate bounds: sampled points stay inside") {
    for (int trial = 0; trial < 10; ++trial) {
        const Network net = random_network({3, 5, 4, 1}, 7100 + trial);
        const InputBox box = unit_box(3, 0.8);
        const auto [lo, hi] = compute_intermediate_bounds(net, box, {});
        const Eigen::MatrixXd xs = box_samples(box, 100, 31 + trial);
        for (int c = 0; c < xs.cols(); ++c) {
            for (int k = 1; k < net.depth(); ++k) {
                const Eigen::VectorXd y = net.preactivation(xs.col(c), k);
                for (Eigen::Index j = 0; j < y.size(); ++j) {
                    CHECK(lo[k - 1](j) <= y(j) + 1e-9);
                    CHECK(hi[k - 1](j) >= y(j) - 1e-9);
                }
            }
        }
    }
}

TEST_CASE("fully constrained network is exactly affine") {
    const Network net = random_network({3, 5, 4, 1}, 88);
    const InputBox box = unit_box(3);
    const Eigen::VectorXd anchor = random_vector(3, 89, 0.3);
    const ConstraintSet cs = signs_at(net, anchor);
    const LinearBoundsSet b = compute_linear_bounds(net, box, cs);

    // No relaxation anywhere: lower and upper coincide bitwise, incl. f.
    for (int k = 1; k <= net.depth(); ++k) {
        const LinearFunctionBundle& bd = b.bundle(k);
        CHECK((bd.lower_A.array() == bd.upper_A.array()).all());
        CHECK((bd.lower_b.array() == bd.upper_b.array()).all());
    }

    // Concrete bounds equal the clamped box extrema of the affine
    // composite selected by the constraint pattern.
    Eigen::MatrixXd M = net.layer(1).weights;
    Eigen::VectorXd c = net.layer(1).bias;
    for (int k = 1; k <= net.depth(); ++k) {
        if (k > 1) {
            Eigen::VectorXd mask = Eigen::VectorXd::Zero(net.width(k - 1));
            for (const auto& [j, sign] : cs.layer_constraints(k - 1))
                mask(j) = sign == SignConstraint::GeqZero ? 1.0 : 0.0;
            c = net.layer(k).weights * mask.asDiagonal() * c + net.layer(k).bias;
            M = net.layer(k).weights * mask.asDiagonal() * M;
        }
        Eigen::VectorXd exact_lo =
            c + M.cwiseMax(0.0) * box.lo + M.cwiseMin(0.0) * box.hi;
        Eigen::VectorXd exact_hi =
            c + M.cwiseMax(0.0) * box.hi + M.cwiseMin(0.0) * box.lo;
        if (k < net.depth()) {
            for (const auto& [j, sign] : cs.layer_constraints(k)) {
                if (sign == SignConstraint::GeqZero)
                    exact_lo(j) = std::max(exact_lo(j), 0.0);
                else
                    exact_hi(j) = std::min(exact_hi(j), 0.0);
            }
        }
        for (int j = 0; j < net.width(k); ++j) {
            const double scale =
                std::max({1.0, std::abs(exact_lo(j)), std::abs(exact_hi(j))});
            CHECK(std::abs(b.lower(k, j) - exact_lo(j)) <= 1e-12 * scale);
            CHECK(std::abs(b.upper(k, j) - exact_hi(j)) <= 1e-12 * scale);
        }
    }
}

TEST_CASE("prefix stability: layer-k bundles ignore later constraints") {
    std::mt19937_64 pick(777);
    for (int trial = 0; trial < 50; ++trial) {
        const Network net = random_network({2, 4, 4, 3, 1}, 5000 + trial);
        const InputBox box = unit_box(2, 0.7);
        const Eigen::VectorXd anchor = box_samples(box, 1, 40 + trial).col(0);
        const ConstraintSet full = signs_at(net, anchor);

        // Shared prefix on layers < k, different tails at layers >= k.
        const int k = 2 + static_cast<int>(pick() % 2); // 2 or 3
        ConstraintSet a, b;
        for (const auto& [key, sign] : full.entries()) {
            if (key.first < k) {
                if (pick() % 2 == 0) {
                    a.add(key.first, key.second, sign);
                    b.add(key.first, key.second, sign);
                }
            } else {
                const int coin = static_cast<int>(pick() % 3);
                const SignConstraint flipped =
                    sign == SignConstraint::GeqZero ? SignConstraint::LtZero
                                                    : SignConstraint::GeqZero;
                if (coin == 0)
                    a.add(key.first, key.second, sign);
                else if (coin == 1)
                    b.add(key.first, key.second, flipped);
                // coin == 2: neither set constrains this neuron
            }
        }

        const LinearBoundsSet ba = compute_linear_bounds(net, box, a);
        const LinearBoundsSet bb = compute_linear_bounds(net, box, b);
        for (int layer = 1; layer <= k; ++layer)
            CHECK(bundles_bitwise_equal(ba.bundle(layer), bb.bundle(layer)));
    }
}

TEST_CASE("infeasible constraint sets are represented, not rejected") {
    // Force LT on a neuron that is stably active over the box.
    AffineLayer l1;
    l1.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
    l1.bias = Eigen::VectorXd::Constant(1, 10.0); // y = x + 10 > 0 on box
    AffineLayer l2;
    l2.weights = Eigen::MatrixXd::Constant(1, 1, 1.0);
    l2.bias = Eigen::VectorXd::Zero(1);
    const Network net({l1, l2});
    ConstraintSet cs;
    cs.add(1, 0, SignConstraint::LtZero);
    const LinearBoundsSet b = compute_linear_bounds(net, unit_box(1), cs);
    CHECK(b.lower(1, 0) > 0.0);  // unclamped lower stays positive
    CHECK(b.upper(1, 0) == 0.0); // clamped: crossed bounds, fine
    CHECK(b.f_bundle().lower_A(0, 0) == 0.0); // LT piece -> zero function
}

TEST_CASE("bounds debug dump is valid json") {
    const Network net = random_network({2, 3, 1}, 3);
    const LinearBoundsSet b = compute_linear_bounds(net, unit_box(2), {});
    const std::string s = b.to_json();
    CHECK(s.find("lower_A") != std::string::npos);
    CHECK(s.find("concrete_upper") != std::string::npos);
}

TEST_CASE("constraint set bookkeeping") {
    ConstraintSet cs;
    cs.add(2, 1, SignConstraint::LtZero);
    cs.add(1, 3, SignConstraint::GeqZero);
    CHECK(cs.size() == 2);
    CHECK(cs.find(1, 3) == SignConstraint::GeqZero);
    CHECK(!cs.find(1, 0).has_value());
    CHECK_THROWS_AS(cs.add(2, 1, SignConstraint::GeqZero), Error);

    // Layer decomposition is recoverable and ordered.
    const auto l1 = cs.layer_constraints(1);
    REQUIRE(l1.size() == 1);
    CHECK(l1[0].first == 3);
    const auto l9 = cs.layer_constraints(9);
    CHECK(l9.empty());

    // Iteration order is (layer, neuron) ascending.
    std::vector<std::pair<int, int>> keys;
    for (const auto& [key, sign] : cs.entries())
        keys.push_back(key);
    CHECK(keys == std::vector<std::pair<int, int>>{{1, 3}, {2, 1}});
}
