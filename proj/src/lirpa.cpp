#include "lirpa.hpp"

#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace pv {

void ConstraintSet::add(int layer, int neuron, SignConstraint sign) {
    const auto [it, inserted] = entries_.emplace(Key{layer, neuron}, sign);
    (void)it;
    if (!inserted)
        throw Error(ErrorCode::InvalidArgument,
                    "duplicate constraint on layer " + std::to_string(layer) +
                        " neuron " + std::to_string(neuron));
}

ConstraintSet ConstraintSet::with(int layer, int neuron, SignConstraint sign) const {
    ConstraintSet out = *this;
    out.add(layer, neuron, sign);
    return out;
}

std::optional<SignConstraint> ConstraintSet::find(int layer, int neuron) const {
    const auto it = entries_.find(Key{layer, neuron});
    if (it == entries_.end())
        return std::nullopt;
    return it->second;
}

std::vector<std::pair<int, SignConstraint>>
ConstraintSet::layer_constraints(int layer) const {
    std::vector<std::pair<int, SignConstraint>> out;
    for (auto it = entries_.lower_bound(Key{layer, -1});
         it != entries_.end() && it->first.first == layer; ++it)
        out.emplace_back(it->first.second, it->second);
    return out;
}

ReluRelaxation relax_relu(double l, double u,
                          std::optional<SignConstraint> constraint) {
    if (constraint) {
        return *constraint == SignConstraint::GeqZero
                   ? ReluRelaxation{1.0, 0.0, 1.0, 0.0}
                   : ReluRelaxation{0.0, 0.0, 0.0, 0.0};
    }
    if (l > u)
        throw Error(ErrorCode::InvalidArgument, "relax_relu: l > u");
    if (l >= 0.0)
        return {1.0, 0.0, 1.0, 0.0};
    if (u <= 0.0)
        return {0.0, 0.0, 0.0, 0.0};
    const double upper_slope = u / (u - l);
    const double upper_intercept = -upper_slope * l;
    const double lower_slope = (u >= -l) ? 1.0 : 0.0;
    return {lower_slope, 0.0, upper_slope, upper_intercept};
}

namespace {

// Relaxation lines of one ReLU layer, column-aligned with its neurons.
struct LayerRelaxation {
    Eigen::ArrayXd lower_slope, lower_intercept, upper_slope, upper_intercept;
};

LayerRelaxation relax_layer(int layer, int width, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi,
                            const ConstraintSet& constraints) {
    LayerRelaxation r;
    r.lower_slope.resize(width);
    r.lower_intercept.resize(width);
    r.upper_slope.resize(width);
    r.upper_intercept.resize(width);
    for (int j = 0; j < width; ++j) {
        const auto c = constraints.find(layer, j);
        ReluRelaxation lines{};
        if (!c && lo(j) > hi(j)) {
            // Crossed bounds can only arise under an infeasible prefix;
            // any sound-on-empty-set choice works, use the zero piece.
            lines = ReluRelaxation{0.0, 0.0, 0.0, 0.0};
        } else {
            lines = relax_relu(lo(j), hi(j), c);
        }
        r.lower_slope(j) = lines.lower_slope;
        r.lower_intercept(j) = lines.lower_intercept;
        r.upper_slope(j) = lines.upper_slope;
        r.upper_intercept(j) = lines.upper_intercept;
    }
    return r;
}

// One backward coefficient state: target >= (or <=) Lam * sigma(y^(k)) + off.
struct BackwardState {
    Eigen::MatrixXd lam;
    Eigen::VectorXd off;
};

// Push the state through the ReLU of layer k, choosing per-coefficient
// relaxation lines. `for_lower` selects the lower-bound direction:
// positive coefficients take the lower line, negative the upper line
// (and the reverse for an upper bound).
void absorb_relu(BackwardState& s, const LayerRelaxation& r, bool for_lower) {
    const Eigen::ArrayXd& slope_pos = for_lower ? r.lower_slope : r.upper_slope;
    const Eigen::ArrayXd& slope_neg = for_lower ? r.upper_slope : r.lower_slope;
    const Eigen::ArrayXd& icpt_pos = for_lower ? r.lower_intercept : r.upper_intercept;
    const Eigen::ArrayXd& icpt_neg = for_lower ? r.upper_intercept : r.lower_intercept;

    const Eigen::MatrixXd pos = s.lam.cwiseMax(0.0);
    const Eigen::MatrixXd neg = s.lam.cwiseMin(0.0);
    s.off += pos * icpt_pos.matrix() + neg * icpt_neg.matrix();
    s.lam = pos * slope_pos.matrix().asDiagonal() +
            neg * slope_neg.matrix().asDiagonal();
}

// Backward pass from layer m (m = N bounds f). Uses concrete bounds and
// relaxations of layers 1..m-1 only. When lambda_out is non-null (f pass),
// records the lower-bound coefficient row on each y^(k) before relaxation.
LinearFunctionBundle backward_bounds(const Network& net, int m,
                                     const std::vector<LayerRelaxation>& relax,
                                     std::vector<Eigen::RowVectorXd>* lambda_out) {
    const AffineLayer& top = net.layer(m);
    if (m == 1)
        return {top.weights, top.bias, top.weights, top.bias};

    BackwardState low{top.weights, top.bias};
    BackwardState up{top.weights, top.bias};
    LinearFunctionBundle out;
    for (int k = m - 1; k >= 1; --k) {
        if (lambda_out)
            (*lambda_out)[k - 1] = low.lam.row(0);
        absorb_relu(low, relax[k - 1], /*for_lower=*/true);
        absorb_relu(up, relax[k - 1], /*for_lower=*/false);
        const AffineLayer& lk = net.layer(k);
        if (k > 1) {
            low.off += low.lam * lk.bias;
            low.lam = low.lam * lk.weights;
            up.off += up.lam * lk.bias;
            up.lam = up.lam * lk.weights;
        } else {
            out.lower_b = low.off + low.lam * lk.bias;
            out.lower_A = low.lam * lk.weights;
            out.upper_b = up.off + up.lam * lk.bias;
            out.upper_A = up.lam * lk.weights;
        }
    }
    return out;
}

// Extrema of the bundle's linear functions over the box.
void concretize(const LinearFunctionBundle& b, const InputBox& box,
                Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    lo = b.lower_b + b.lower_A.cwiseMax(0.0) * box.lo +
         b.lower_A.cwiseMin(0.0) * box.hi;
    hi = b.upper_b + b.upper_A.cwiseMax(0.0) * box.hi +
         b.upper_A.cwiseMin(0.0) * box.lo;
}

} // namespace

LinearBoundsSet compute_linear_bounds(const Network& network,
                                      const InputBox& domain,
                                      const ConstraintSet& constraints) {
    const int n = network.depth();
    if (domain.lo.size() != network.input_dim() ||
        domain.hi.size() != network.input_dim())
        throw Error(ErrorCode::Dimension, "box size != network input width");
    if ((domain.lo.array() > domain.hi.array()).any())
        throw Error(ErrorCode::InvalidArgument, "box lower exceeds upper");
    for (const auto& [key, sign] : constraints.entries()) {
        (void)sign;
        const auto [k, j] = key;
        if (k < 1 || k >= n || j < 0 || j >= network.width(k))
            throw Error(ErrorCode::InvalidArgument,
                        "constraint on nonexistent neuron (layer " +
                            std::to_string(k) + ", neuron " + std::to_string(j) +
                            ")");
    }

    LinearBoundsSet out;
    out.per_layer.resize(n);
    out.concrete_lower.resize(n);
    out.concrete_upper.resize(n);
    out.f_lower_coeffs.resize(n - 1);

    // Forward recursion over layers: bound layer k with full backward
    // propagation through the relaxations of layers < k, then clamp by
    // the constraints on layer k itself.
    std::vector<LayerRelaxation> relax;
    relax.reserve(n - 1);
    for (int k = 1; k <= n; ++k) {
        const bool is_output = (k == n);
        LinearFunctionBundle bundle = backward_bounds(
            network, k, relax, is_output ? &out.f_lower_coeffs : nullptr);
        Eigen::VectorXd lo, hi;
        concretize(bundle, domain, lo, hi);
        if (!is_output) {
            for (const auto& [j, sign] : constraints.layer_constraints(k)) {
                if (sign == SignConstraint::GeqZero)
                    lo(j) = std::max(lo(j), 0.0);
                else
                    hi(j) = std::min(hi(j), 0.0);
            }
            relax.push_back(relax_layer(k, network.width(k), lo, hi, constraints));
        }
        out.per_layer[k - 1] = std::move(bundle);
        out.concrete_lower[k - 1] = std::move(lo);
        out.concrete_upper[k - 1] = std::move(hi);
    }
    return out;
}

std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>
compute_intermediate_bounds(const Network& network, const InputBox& domain,
                            const ConstraintSet& constraints) {
    LinearBoundsSet full = compute_linear_bounds(network, domain, constraints);
    full.concrete_lower.pop_back();
    full.concrete_upper.pop_back();
    return {std::move(full.concrete_lower), std::move(full.concrete_upper)};
}

bool is_unstable(const LinearBoundsSet& bounds, const ConstraintSet& constraints,
                 int layer, int neuron) {
    if (constraints.contains(layer, neuron))
        return false;
    return bounds.lower(layer, neuron) < 0.0 && bounds.upper(layer, neuron) > 0.0;
}

bool bundle_rows_identical(const LinearBoundsSet& bounds, int layer, int neuron) {
    const LinearFunctionBundle& b = bounds.bundle(layer);
    return b.lower_b(neuron) == b.upper_b(neuron) &&
           (b.lower_A.row(neuron).array() == b.upper_A.row(neuron).array()).all();
}

std::string LinearBoundsSet::to_json() const {
    nlohmann::json j;
    for (std::size_t k = 0; k < per_layer.size(); ++k) {
        nlohmann::json layer;
        const LinearFunctionBundle& b = per_layer[k];
        auto mat = [](const Eigen::MatrixXd& m) {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index c = 0; c < m.cols(); ++c)
                    row.push_back(m(r, c));
                rows.push_back(std::move(row));
            }
            return rows;
        };
        auto vec = [](const Eigen::VectorXd& v) {
            return nlohmann::json(std::vector<double>(v.begin(), v.end()));
        };
        layer["lower_A"] = mat(b.lower_A);
        layer["lower_b"] = vec(b.lower_b);
        layer["upper_A"] = mat(b.upper_A);
        layer["upper_b"] = vec(b.upper_b);
        layer["concrete_lower"] = vec(concrete_lower[k]);
        layer["concrete_upper"] = vec(concrete_upper[k]);
        j["layers"].push_back(std::move(layer));
    }
    return j.dump(2);
}

} // namespace pv
