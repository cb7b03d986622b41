#include "model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pv {

namespace {

void check_finite(const AffineLayer& layer, int index) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
        throw Error(ErrorCode::NonFinite,
                    "layer " + std::to_string(index) +
                        ": non-finite weight or bias entry");
}

} // namespace

Network::Network(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty())
        throw Error(ErrorCode::InvalidArgument, "network has no layers");
    for (int k = 0; k < static_cast<int>(layers_.size()); ++k) {
        const AffineLayer& l = layers_[k];
        if (l.weights.rows() != l.bias.size())
            throw Error(ErrorCode::Dimension,
                        "layer " + std::to_string(k + 1) + ": weight rows (" +
                            std::to_string(l.weights.rows()) +
                            ") != bias length (" + std::to_string(l.bias.size()) +
                            ")");
        if (k > 0 && l.in_dim() != layers_[k - 1].out_dim())
            throw Error(ErrorCode::Dimension,
                        "layer " + std::to_string(k + 1) + ": input width (" +
                            std::to_string(l.in_dim()) +
                            ") != previous layer output width (" +
                            std::to_string(layers_[k - 1].out_dim()) + ")");
        check_finite(l, k + 1);
    }
}

int Network::width(int k) const {
    if (k < 0 || k > depth())
        throw Error(ErrorCode::InvalidArgument,
                    "layer width index out of range: " + std::to_string(k));
    return k == 0 ? input_dim() : layers_[k - 1].out_dim();
}

const AffineLayer& Network::layer(int k) const {
    if (k < 1 || k > depth())
        throw Error(ErrorCode::InvalidArgument,
                    "layer index out of range: " + std::to_string(k));
    return layers_[k - 1];
}

Eigen::VectorXd Network::forward_vec(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim())
        throw Error(ErrorCode::Dimension,
                    "input length " + std::to_string(x.size()) +
                        " != network input width " + std::to_string(input_dim()));
    Eigen::VectorXd z = x;
    for (int k = 0; k < depth(); ++k) {
        z = layers_[k].weights * z + layers_[k].bias;
        if (k + 1 < depth())
            z = z.cwiseMax(0.0);
    }
    return z;
}

double Network::forward(const Eigen::VectorXd& x) const {
    if (output_dim() != 1)
        throw Error(ErrorCode::InvalidArgument,
                    "scalar forward on a network with output width " +
                        std::to_string(output_dim()));
    return forward_vec(x)(0);
}

Eigen::VectorXd Network::preactivation(const Eigen::VectorXd& x, int k) const {
    if (k < 1 || k > depth())
        throw Error(ErrorCode::InvalidArgument,
                    "preactivation layer out of range: " + std::to_string(k));
    if (x.size() != input_dim())
        throw Error(ErrorCode::Dimension,
                    "input length " + std::to_string(x.size()) +
                        " != network input width " + std::to_string(input_dim()));
    Eigen::VectorXd z = x;
    for (int i = 0; i < k; ++i) {
        if (i > 0)
            z = z.cwiseMax(0.0);
        z = layers_[i].weights * z + layers_[i].bias;
    }
    return z;
}

Eigen::MatrixXd Network::forward_batch(const Eigen::MatrixXd& X) const {
    if (X.rows() != input_dim())
        throw Error(ErrorCode::Dimension, "batch row count != input width");
    Eigen::MatrixXd Z = X;
    for (int k = 0; k < depth(); ++k) {
        Z = (layers_[k].weights * Z).colwise() + layers_[k].bias;
        if (k + 1 < depth())
            Z = Z.cwiseMax(0.0);
    }
    return Z;
}

std::vector<Eigen::MatrixXd> Network::preactivation_batch(
    const Eigen::MatrixXd& X) const {
    if (X.rows() != input_dim())
        throw Error(ErrorCode::Dimension, "batch row count != input width");
    std::vector<Eigen::MatrixXd> out;
    out.reserve(depth());
    Eigen::MatrixXd Z = X;
    for (int k = 0; k < depth(); ++k) {
        if (k > 0)
            Z = Z.cwiseMax(0.0);
        Z = (layers_[k].weights * Z).colwise() + layers_[k].bias;
        out.push_back(Z);
    }
    return out;
}

Network fold_spec(const Network& network, const HalfSpaceSpec& spec) {
    if (spec.c.size() != network.output_dim())
        throw Error(ErrorCode::Dimension,
                    "spec vector length " + std::to_string(spec.c.size()) +
                        " != network output width " +
                        std::to_string(network.output_dim()));
    if (spec.c.isZero(0.0))
        throw Error(ErrorCode::InvalidArgument, "spec vector is all zero");
    std::vector<AffineLayer> layers;
    layers.reserve(network.depth());
    for (int k = 1; k < network.depth(); ++k)
        layers.push_back(network.layer(k));
    const AffineLayer& last = network.layer(network.depth());
    AffineLayer folded;
    folded.weights = spec.c.transpose() * last.weights;
    folded.bias = Eigen::VectorXd::Constant(1, spec.c.dot(last.bias) + spec.d);
    layers.push_back(std::move(folded));
    return Network(std::move(layers));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

// Shortest-exact decimal would also round trip, but a fixed 17-significant-
// digit format keeps files diffable across writers.
void append_double(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
    out += '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i)
            out += ", ";
        append_double(out, v(i));
    }
    out += ']';
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m,
                   const std::string& indent) {
    out += '[';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (r)
            out += ',';
        out += '\n' + indent;
        out += '[';
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c)
                out += ", ";
            append_double(out, m(r, c));
        }
        out += ']';
    }
    out += ']';
}

Eigen::VectorXd parse_vector(const json& j, const std::string& what) {
    if (!j.is_array())
        throw Error(ErrorCode::Parse, what + ": expected an array");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw Error(ErrorCode::Parse, what + ": expected numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty())
        throw Error(ErrorCode::Parse, what + ": expected a non-empty 2-D array");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Eigen::MatrixXd m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw Error(ErrorCode::Parse, what + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
    }
    return m;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, path + ": " + e.what());
    }
    return j;
}

} // namespace

Network load_model(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
        throw Error(ErrorCode::Parse, path + ": missing \"layers\" array");
    std::vector<AffineLayer> layers;
    int index = 0;
    for (const json& lj : j["layers"]) {
        ++index;
        if (!lj.is_object() || !lj.contains("weights") || !lj.contains("bias"))
            throw Error(ErrorCode::Parse,
                        "layer " + std::to_string(index) +
                            ": expected \"weights\" and \"bias\"");
        AffineLayer layer;
        layer.weights =
            parse_matrix(lj["weights"], "layer " + std::to_string(index) + " weights");
        layer.bias = parse_vector(lj["bias"], "layer " + std::to_string(index) + " bias");
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers)); // validates shapes and finiteness
}

void save_model(const Network& network, const std::string& path) {
    std::string out = "{\n  \"layers\": [";
    for (int k = 1; k <= network.depth(); ++k) {
        const AffineLayer& l = network.layer(k);
        if (k > 1)
            out += ',';
        out += "\n    {\n      \"weights\": ";
        append_matrix(out, l.weights, "        ");
        out += ",\n      \"bias\": ";
        append_vector(out, l.bias);
        out += "\n    }";
    }
    out += "\n  ]\n}\n";
    std::ofstream f(path);
    if (!f)
        throw Error(ErrorCode::Io, "cannot write file: " + path);
    f << out;
}

namespace {

ProblemInstance problem_from_json(const json& j, const std::string& base_dir) {
    if (!j.is_object())
        throw Error(ErrorCode::Parse, "problem: expected a JSON object");
    for (const char* key : {"model", "mean", "eta"})
        if (!j.contains(key))
            throw Error(ErrorCode::Parse,
                        std::string("problem: missing \"") + key + "\"");

    std::filesystem::path model_path = j["model"].get<std::string>();
    if (model_path.is_relative() && !base_dir.empty())
        model_path = std::filesystem::path(base_dir) / model_path;
    Network net = load_model(model_path.string());

    if (j.contains("spec") && !j["spec"].is_null()) {
        HalfSpaceSpec spec;
        spec.c = parse_vector(j["spec"]["c"], "spec.c");
        spec.d = j["spec"].value("d", 0.0);
        net = fold_spec(net, spec);
    } else if (net.output_dim() != 1) {
        throw Error(ErrorCode::Dimension,
                    "problem has no spec but the model output width is " +
                        std::to_string(net.output_dim()));
    }

    ProblemInstance p{std::move(net), parse_vector(j["mean"], "mean"),
                      CovarianceSpec{}, j["eta"].get<double>(),
                      j.value("truncation_z", 3.0)};
    if (p.input_mean.size() != p.network.input_dim())
        throw Error(ErrorCode::Dimension, "mean length != model input width");

    if (j.contains("cov_diag")) {
        p.input_cov.diagonal = true;
        p.input_cov.diag = parse_vector(j["cov_diag"], "cov_diag");
        if (p.input_cov.diag.size() != p.input_mean.size())
            throw Error(ErrorCode::Dimension, "cov_diag length != mean length");
        if ((p.input_cov.diag.array() <= 0.0).any())
            throw Error(ErrorCode::InvalidArgument,
                        "cov_diag entries must be strictly positive");
    } else if (j.contains("cov_full")) {
        p.input_cov.diagonal = false;
        p.input_cov.full = parse_matrix(j["cov_full"], "cov_full");
        if (p.input_cov.full.rows() != p.input_mean.size() ||
            p.input_cov.full.cols() != p.input_mean.size())
            throw Error(ErrorCode::Dimension, "cov_full shape != mean length");
    } else {
        throw Error(ErrorCode::Parse, "problem: need \"cov_diag\" or \"cov_full\"");
    }

    if (!(p.eta > 0.0 && p.eta <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "eta must be in (0, 1]");
    if (!(p.truncation_z > 0.0))
        throw Error(ErrorCode::InvalidArgument, "truncation_z must be positive");
    return p;
}

} // namespace

ProblemInstance load_problem(const std::string& path) {
    const json j = read_json_file(path);
    return problem_from_json(j, std::filesystem::path(path).parent_path().string());
}

ProblemInstance parse_problem_json(const std::string& json_text,
                                   const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, e.what());
    }
    return problem_from_json(j, base_dir);
}

void save_problem(const std::string& model_path, const HalfSpaceSpec* spec,
                  const Eigen::VectorXd& mean, const Eigen::VectorXd& cov_diag,
                  double eta, double truncation_z, const std::string& out_path) {
    std::string out = "{\n  \"model\": " + json(model_path).dump() + ",\n";
    out += "  \"spec\": ";
    if (spec) {
        out += "{\"c\": ";
        append_vector(out, spec->c);
        out += ", \"d\": ";
        append_double(out, spec->d);
        out += "}";
    } else {
        out += "null";
    }
    out += ",\n  \"mean\": ";
    append_vector(out, mean);
    out += ",\n  \"cov_diag\": ";
    append_vector(out, cov_diag);
    out += ",\n  \"eta\": ";
    append_double(out, eta);
    out += ",\n  \"truncation_z\": ";
    append_double(out, truncation_z);
    out += "\n}\n";
    std::ofstream f(out_path);
    if (!f)
        throw Error(ErrorCode::Io, "cannot write file: " + out_path);
    f << out;
}

} // namespace pv
