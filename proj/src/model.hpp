#ifndef PROBVERIF_MODEL_HPP
#define PROBVERIF_MODEL_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace pv {

// One dense affine layer y = W x + b.
struct AffineLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;

    int out_dim() const { return static_cast<int>(weights.rows()); }
    int in_dim() const { return static_cast<int>(weights.cols()); }
};

// Feedforward network of N affine layers with an implicit ReLU between
// consecutive layers and nowhere else. Layer indices are 1-based (layer k
// produces preactivation y^(k)); neuron indices are 0-based.
//
// Immutable after construction; safe to share across threads.
class Network {
  public:
    explicit Network(std::vector<AffineLayer> layers);

    int depth() const { return static_cast<int>(layers_.size()); } // N
    int input_dim() const { return layers_.front().in_dim(); }     // n_0
    int output_dim() const { return layers_.back().out_dim(); }    // n_N

    // n_k for k in [0, N].
    int width(int k) const;

    // k in [1, N].
    const AffineLayer& layer(int k) const;

    // Exact forward evaluation; x must have length n_0.
    Eigen::VectorXd forward_vec(const Eigen::VectorXd& x) const;

    // Forward evaluation of a scalar (folded) network.
    double forward(const Eigen::VectorXd& x) const;

    // Preactivation y^(k)(x) for k in [1, N]; y^(N) = full output.
    Eigen::VectorXd preactivation(const Eigen::VectorXd& x, int k) const;

    // Column-wise batch evaluation: X is n_0 x B, result is n_N x B.
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const;

    // Batch preactivations for all hidden layers (k = 1..N-1) plus the
    // output as the last entry; used by the sampling oracle.
    std::vector<Eigen::MatrixXd> preactivation_batch(const Eigen::MatrixXd& X) const;

  private:
    std::vector<AffineLayer> layers_;
};

// Output half-space {y : c.y + d > 0}.
struct HalfSpaceSpec {
    Eigen::VectorXd c;
    double d = 0.0;
};

// Collapse a half-space spec into the last layer of a multi-output network,
// producing the equivalent scalar network with f(x) = c.f_orig(x) + d.
Network fold_spec(const Network& network, const HalfSpaceSpec& spec);

// Input covariance: either a diagonal (vector of variances) or a full
// positive-definite matrix.
struct CovarianceSpec {
    bool diagonal = true;
    Eigen::VectorXd diag;
    Eigen::MatrixXd full;

    int dim() const {
        return diagonal ? static_cast<int>(diag.size())
                        : static_cast<int>(full.rows());
    }
    Eigen::VectorXd variances() const {
        return diagonal ? diag : Eigen::VectorXd(full.diagonal());
    }
};

// A fully specified verification problem: folded scalar network, Gaussian
// input, probability threshold, and truncation half-width multiplier.
struct ProblemInstance {
    Network network;
    Eigen::VectorXd input_mean;
    CovarianceSpec input_cov;
    double eta = 0.95;
    double truncation_z = 3.0;
};

// JSON model file I/O. Round trips are bit-exact (17 significant digits).
Network load_model(const std::string& path);
void save_model(const Network& network, const std::string& path);

// Problem file loader; "model" paths are resolved relative to the problem
// file's directory. A null "spec" means the model is already scalar.
ProblemInstance load_problem(const std::string& path);
ProblemInstance parse_problem_json(const std::string& json_text,
                                   const std::string& base_dir);

void save_problem(const std::string& model_path, const HalfSpaceSpec* spec,
                  const Eigen::VectorXd& mean, const Eigen::VectorXd& cov_diag,
                  double eta, double truncation_z, const std::string& out_path);

} // namespace pv

#endif
