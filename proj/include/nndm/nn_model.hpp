#pragma once

// Per-action feed-forward networks that define the mean dynamics
// x_{k+1} = f_a(x_k) + v_k, v_k ~ N(0, Sigma).

#include "nndm/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace nndm {

enum class Activation { relu, sigmoid, tanh, linear };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw Error("nn_model", "unsupported activation '" + s + "'");
}

inline double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
    switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::linear: return x;
    }
    return x;
}

inline double activate_derivative(Activation a, double x) {
    switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
        const double s = sigmoid(x);
        return s * (1.0 - s);
    }
    case Activation::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case Activation::linear: return 1.0;
    }
    return 1.0;
}

struct DenseLayer {
    Matrix weights; // out_dim x in_dim, row i = output neuron i
    Vector bias;
    Activation activation = Activation::linear;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }

    Vector forward(const Vector& x) const {
        Vector y = weights * x + bias;
        if (activation != Activation::linear)
            for (Eigen::Index i = 0; i < y.size(); ++i)
                y(i) = activate(activation, y(i));
        return y;
    }

    /// Columns of `x` are independent inputs.
    Matrix forward_batch(const Matrix& x) const {
        Matrix y = weights * x;
        y.colwise() += bias;
        if (activation != Activation::linear)
            y = y.unaryExpr([a = activation](double v) { return activate(a, v); });
        return y;
    }
};

using Network = std::vector<DenseLayer>;

/// Immutable set of per-action networks f_a : R^n -> R^n.
class NeuralDynamics {
public:
    NeuralDynamics(int dim, std::vector<std::string> actions, std::map<std::string, Network> networks)
        : dim_(dim), actions_(std::move(actions)) {
        if (dim_ <= 0)
            throw Error("nn_model", "state dimension must be positive");
        if (actions_.empty())
            throw Error("nn_model", "action list is empty");
        std::set<std::string> seen;
        for (const auto& a : actions_) {
            if (!seen.insert(a).second)
                throw Error("nn_model", "duplicate action '" + a + "'");
            auto it = networks.find(a);
            if (it == networks.end())
                throw Error("nn_model", "no network given for action '" + a + "'");
            validate(a, it->second);
            networks_.push_back(std::move(it->second));
        }
        if (networks.size() != actions_.size())
            for (const auto& [name, net] : networks)
                if (!seen.count(name))
                    throw Error("nn_model", "network '" + name + "' is not a declared action");
    }

    int dim() const { return dim_; }
    std::size_t num_actions() const { return actions_.size(); }
    const std::vector<std::string>& actions() const { return actions_; }
    const std::string& action_name(std::size_t a) const { return actions_.at(a); }

    std::size_t action_index(const std::string& name) const {
        for (std::size_t a = 0; a < actions_.size(); ++a)
            if (actions_[a] == name)
                return a;
        throw Error("nn_model", "unknown action '" + name + "'");
    }

    const Network& network(std::size_t a) const { return networks_.at(a); }

    Vector evaluate(std::size_t a, const Vector& x) const {
        if (x.size() != dim_)
            throw Error("nn_model", "input has dimension " + std::to_string(x.size()) +
                                        ", expected " + std::to_string(dim_));
        Vector h = x;
        for (const auto& layer : network(a))
            h = layer.forward(h);
        return h;
    }

    Vector evaluate(const std::string& action, const Vector& x) const {
        return evaluate(action_index(action), x);
    }

    Matrix evaluate_batch(std::size_t a, const Matrix& xs) const {
        Matrix h = xs;
        for (const auto& layer : network(a))
            h = layer.forward_batch(h);
        return h;
    }

private:
    void validate(const std::string& action, const Network& net) const {
        if (net.empty())
            throw Error("nn_model", "network for action '" + action + "' has no layers");
        Eigen::Index expected_in = dim_;
        for (std::size_t k = 0; k < net.size(); ++k) {
            const auto& layer = net[k];
            const std::string where = "action '" + action + "' layer " + std::to_string(k);
            if (layer.weights.rows() != layer.bias.size())
                throw Error("nn_model", "dimension mismatch at " + where + ": " +
                                            std::to_string(layer.weights.rows()) + " weight rows vs " +
                                            std::to_string(layer.bias.size()) + " biases");
            if (layer.in_dim() != expected_in)
                throw Error("nn_model", "dimension mismatch at " + where + ": in_dim " +
                                            std::to_string(layer.in_dim()) + ", expected " +
                                            std::to_string(expected_in));
            if (!layer.weights.allFinite() || !layer.bias.allFinite())
                throw Error("nn_model", "non-finite parameter at " + where);
            expected_in = layer.out_dim();
        }
        if (expected_in != dim_)
            throw Error("nn_model", "dimension mismatch: action '" + action + "' outputs " +
                                        std::to_string(expected_in) + " values, expected " +
                                        std::to_string(dim_));
    }

    int dim_;
    std::vector<std::string> actions_;
    std::vector<Network> networks_;
};

// ---------------------------------------------------------------------------
// JSON interchange: {"dim": n, "actions": [...], "networks": {"a": [layer...]}}
// ---------------------------------------------------------------------------

inline NeuralDynamics networks_from_json(const nlohmann::json& j) {
    try {
        const int dim = j.at("dim").get<int>();
        auto actions = j.at("actions").get<std::vector<std::string>>();
        std::map<std::string, Network> nets;
        for (const auto& [name, layers] : j.at("networks").items()) {
            Network net;
            for (const auto& jl : layers) {
                DenseLayer layer;
                const auto rows = jl.at("weights").get<std::vector<std::vector<double>>>();
                const auto bias = jl.at("bias").get<std::vector<double>>();
                const std::size_t cols = rows.empty() ? 0 : rows.front().size();
                layer.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != cols)
                        throw Error("nn_model", "ragged weight matrix in action '" + name + "' layer " +
                                                    std::to_string(net.size()));
                    for (std::size_t c = 0; c < cols; ++c)
                        layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
                }
                layer.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
                layer.activation = parse_activation(jl.value("activation", std::string("linear")));
                net.push_back(std::move(layer));
            }
            nets.emplace(name, std::move(net));
        }
        return NeuralDynamics(dim, std::move(actions), std::move(nets));
    } catch (const nlohmann::json::exception& e) {
        throw Error("nn_model", std::string("parse error: ") + e.what());
    }
}

inline nlohmann::json networks_to_json(const NeuralDynamics& nd) {
    nlohmann::json j;
    j["dim"] = nd.dim();
    j["actions"] = nd.actions();
    nlohmann::json nets = nlohmann::json::object();
    for (std::size_t a = 0; a < nd.num_actions(); ++a) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& layer : nd.network(a)) {
            std::vector<std::vector<double>> rows(static_cast<std::size_t>(layer.weights.rows()));
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    rows[static_cast<std::size_t>(r)].push_back(layer.weights(r, c));
            layers.push_back({{"weights", rows},
                              {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())},
                              {"activation", to_string(layer.activation)}});
        }
        nets[nd.action_name(a)] = layers;
    }
    j["networks"] = nets;
    return j;
}

inline NeuralDynamics load_networks(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("nn_model", "cannot open network file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("nn_model", "parse error in '" + path + "': " + e.what());
    }
    return networks_from_json(j);
}

// ---------------------------------------------------------------------------
// Process noise
// ---------------------------------------------------------------------------

inline void check_covariance(const Matrix& cov, const std::string& module) {
    if (cov.rows() != cov.cols() || cov.rows() == 0)
        throw Error(module, "covariance must be a non-empty square matrix");
    if (!cov.allFinite())
        throw Error(module, "covariance has non-finite entries");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error(module, "covariance is not symmetric");
}

/// Draws v ~ N(0, Sigma) as L * e with Sigma = L L^T.
class GaussianNoise {
public:
    explicit GaussianNoise(const Matrix& covariance) {
        check_covariance(covariance, "nn_model");
        Eigen::LLT<Matrix> llt(covariance);
        if (llt.info() != Eigen::Success)
            throw Error("nn_model", "covariance is not positive definite");
        chol_ = llt.matrixL();
        if (chol_.diagonal().minCoeff() <= 0.0)
            throw Error("nn_model", "covariance is not positive definite");
    }

    template <typename Rng>
    Vector sample(Rng& rng) const {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector e(chol_.rows());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            e(i) = normal(rng);
        return chol_ * e;
    }

    const Matrix& cholesky() const { return chol_; }

private:
    Matrix chol_;
};

inline Vector sample_step(const NeuralDynamics& nd, const std::string& action, const Vector& x,
                          const Matrix& covariance, std::uint64_t seed) {
    GaussianNoise noise(covariance);
    std::mt19937_64 rng(seed);
    return nd.evaluate(action, x) + noise.sample(rng);
}

} // namespace nndm
