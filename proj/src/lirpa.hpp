#ifndef PROBVERIF_LIRPA_HPP
#define PROBVERIF_LIRPA_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "model.hpp"

namespace pv {

enum class SignConstraint { GeqZero, LtZero };

// Preactivation sign constraints keyed by (layer, neuron). Layers are
// 1-based (1..N-1), neurons 0-based. At most one sign per neuron;
// iteration order is (layer, neuron) ascending.
class ConstraintSet {
  public:
    using Key = std::pair<int, int>;
    using Map = std::map<Key, SignConstraint>;

    ConstraintSet() = default;

    void add(int layer, int neuron, SignConstraint sign);
    ConstraintSet with(int layer, int neuron, SignConstraint sign) const;

    std::optional<SignConstraint> find(int layer, int neuron) const;
    bool contains(int layer, int neuron) const {
        return find(layer, neuron).has_value();
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const Map& entries() const { return entries_; }

    // C^(k): the constraints on layer k only.
    std::vector<std::pair<int, SignConstraint>> layer_constraints(int layer) const;

    bool operator==(const ConstraintSet& other) const = default;

  private:
    Map entries_;
};

// Axis-aligned input region.
struct InputBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

// Linear lower/upper envelopes A x + b of one preactivation layer (or of f).
struct LinearFunctionBundle {
    Eigen::MatrixXd lower_A;
    Eigen::VectorXd lower_b;
    Eigen::MatrixXd upper_A;
    Eigen::VectorXd upper_b;
};

// One ReLU relaxation: lines sandwiching max(0, y) on [l, u].
struct ReluRelaxation {
    double lower_slope;
    double lower_intercept;
    double upper_slope;
    double upper_intercept;
};

// Sandwich lines for a single neuron. A present constraint decides the
// piece (GeqZero -> identity, LtZero -> zero) regardless of (l, u);
// otherwise l >= 0 gives identity, u <= 0 gives zero, and the unstable
// case uses the slope-u/(u-l) upper line and an adaptive 0/1 lower slope.
ReluRelaxation relax_relu(double l, double u,
                          std::optional<SignConstraint> constraint);

// Linear and concrete bounds for every preactivation layer and for f,
// conditional on a constraint set. Entry k-1 of per_layer bounds y^(k);
// the last entry bounds f. Layer-k bounds are valid for inputs in the box
// that satisfy the constraints on layers 1..k-1 only.
struct LinearBoundsSet {
    std::vector<LinearFunctionBundle> per_layer;  // k = 1..N
    std::vector<Eigen::VectorXd> concrete_lower;  // k = 1..N, constraint-clamped
    std::vector<Eigen::VectorXd> concrete_upper;
    // Backward coefficients on y^(k) taken during the lower-bound pass for
    // f, recorded before relaxing layer k; drives the BaBSR score.
    std::vector<Eigen::RowVectorXd> f_lower_coeffs; // k = 1..N-1

    const LinearFunctionBundle& bundle(int k) const { return per_layer.at(k - 1); }
    const LinearFunctionBundle& f_bundle() const { return per_layer.back(); }
    double lower(int k, int j) const { return concrete_lower.at(k - 1)(j); }
    double upper(int k, int j) const { return concrete_upper.at(k - 1)(j); }

    // Debug dump for test fixtures.
    std::string to_json() const;
};

// Backward linear bound propagation over the box under the given
// constraints: computes intermediate concrete bounds layer by layer, then
// the bundle for every layer and for f. Infeasible constraint sets are
// represented, not rejected (concrete bounds may cross after clamping).
LinearBoundsSet compute_linear_bounds(const Network& network,
                                      const InputBox& domain,
                                      const ConstraintSet& constraints);

// Concrete preactivation bounds (l^(k), u^(k)) for k = 1..N-1 only.
std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>
compute_intermediate_bounds(const Network& network, const InputBox& domain,
                            const ConstraintSet& constraints);

// A neuron is unstable when its clamped concrete bounds straddle zero and
// no constraint pins its sign.
bool is_unstable(const LinearBoundsSet& bounds, const ConstraintSet& constraints,
                 int layer, int neuron);

// Bitwise equality of the lower and upper bundle rows of one neuron; holds
// exactly when no relaxation occurred on any path reaching it.
bool bundle_rows_identical(const LinearBoundsSet& bounds, int layer, int neuron);

} // namespace pv

#endif
