#pragma once

// Freshly generated networks and configurations of the benchmark shapes
// (2D: 4 actions, 3 x 20; car: 3D, 7 actions, 4 x 50; 5 x 100 for stress).

#include "nndm/nn_model.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>
#include <vector>

namespace nndm {

/// Fully random network, weights ~ N(0, 1/fan_in), biases ~ N(0, 0.1).
/// `widths` lists every layer size including input and output.
inline Network random_network(const std::vector<int>& widths, Activation hidden, std::mt19937_64& rng,
                              Activation output = Activation::linear) {
    if (widths.size() < 2)
        throw Error("nn_model", "a network needs at least an input and an output width");
    Network net;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        DenseLayer layer;
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[k]));
        layer.weights = Matrix(widths[k + 1], widths[k]);
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
            layer.weights.data()[i] = scale * normal(rng);
        layer.bias = Vector(widths[k + 1]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            layer.bias(i) = 0.1 * normal(rng);
        layer.activation = k + 2 == widths.size() ? output : hidden;
        net.push_back(std::move(layer));
    }
    return net;
}

/// ReLU network computing f(x) = A x + c + eps * R h(x), where h is the output
/// of randomly weighted hidden neurons. The first 2n neurons of every hidden
/// layer carry relu(x) and relu(-x) through unchanged.
inline Network structured_network(const Matrix& A, const Vector& c, int hidden_layers, int width, double eps,
                                  std::mt19937_64& rng) {
    const int n = static_cast<int>(A.rows());
    if (width < 2 * n + 1 || hidden_layers < 1)
        throw Error("nn_model", "structured network needs hidden width > 2n and at least one hidden layer");
    std::normal_distribution<double> normal(0.0, 1.0);
    const int free = width - 2 * n;
    Network net;
    for (int k = 0; k < hidden_layers; ++k) {
        const int in = k == 0 ? n : width;
        DenseLayer layer;
        layer.activation = Activation::relu;
        layer.weights = Matrix::Zero(width, in);
        layer.bias = Vector::Zero(width);
        if (k == 0) {
            layer.weights.topRows(n) = Matrix::Identity(n, n);
            layer.weights.middleRows(n, n) = -Matrix::Identity(n, n);
        } else {
            layer.weights.topLeftCorner(2 * n, 2 * n) = Matrix::Identity(2 * n, 2 * n);
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 2 * n; i < width; ++i) {
            for (int j = 0; j < in; ++j)
                layer.weights(i, j) = (k == 0 ? 1.0 : scale) * normal(rng);
            layer.bias(i) = 0.5 * normal(rng);
        }
        net.push_back(std::move(layer));
    }
    DenseLayer out;
    out.activation = Activation::linear;
    out.weights = Matrix::Zero(n, width);
    out.weights.leftCols(n) = A;
    out.weights.middleCols(n, n) = -A;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < free; ++j)
            out.weights(i, 2 * n + j) = eps * normal(rng) / std::sqrt(static_cast<double>(free));
    out.bias = c;
    net.push_back(std::move(out));
    return net;
}

/// Network presets: "fixture2d", "car", "stress".
inline NeuralDynamics preset_networks(const std::string& name, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::map<std::string, Network> nets;
    std::vector<std::string> actions;
    if (name == "fixture2d") {
        const Matrix A = Matrix::Identity(2, 2);
        const double d = 0.5;
        const std::vector<Vector> drifts = {Vector::Unit(2, 0) * d, Vector::Unit(2, 0) * -d, Vector::Unit(2, 1) * d,
                                            Vector::Unit(2, 1) * -d};
        for (std::size_t a = 0; a < drifts.size(); ++a) {
            actions.push_back("a" + std::to_string(a + 1));
            nets.emplace(actions.back(), structured_network(A, drifts[a], 3, 20, 0.1, rng));
        }
        return NeuralDynamics(2, actions, std::move(nets));
    }
    if (name == "car") {
        // position x advances, lateral offset y follows the heading, the
        // heading relaxes toward the steering input.
        Matrix A(3, 3);
        A << 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.5;
        const double steer[] = {-0.24, -0.16, -0.08, 0.0, 0.08, 0.16, 0.24};
        for (std::size_t a = 0; a < 7; ++a) {
            actions.push_back("a" + std::to_string(a + 1));
            Vector c(3);
            c << 0.5, 0.0, steer[a];
            nets.emplace(actions.back(), structured_network(A, c, 4, 50, 0.05, rng));
        }
        return NeuralDynamics(3, actions, std::move(nets));
    }
    if (name == "stress") {
        for (std::size_t a = 0; a < 2; ++a) {
            actions.push_back("a" + std::to_string(a + 1));
            nets.emplace(actions.back(), random_network({2, 100, 100, 100, 100, 100, 2}, Activation::relu, rng));
        }
        return NeuralDynamics(2, actions, std::move(nets));
    }
    throw Error("nn_model", "unknown network preset '" + name + "'");
}

/// Pipeline configurations matching the presets.
inline nlohmann::json preset_config(const std::string& name, std::uint64_t seed = 1) {
    using nlohmann::json;
    if (name == "fixture2d")
        return json{{"network", {{"preset", "fixture2d"}, {"seed", seed}}},
                    {"domain", {{-2.0, 2.0}, {-2.0, 2.0}}},
                    {"covariance", {{0.2, 0.0}, {0.0, 0.2}}},
                    {"grid", {20, 20}},
                    {"regions",
                     {{{"label", "O"}, {"lo", {-0.4, -0.4}}, {"hi", {0.4, 0.4}}},
                      {{"label", "D"}, {"lo", {1.0, 1.0}}, {"hi", {2.0, 2.0}}}}},
                    {"spec", {{"template", "reach_avoid"}, {"labels", {{"O", "O"}, {"D", "D"}}}}},
                    {"refinement", {{"rounds", 0}, {"n_ref_fraction", 0.05}}},
                    {"seed", seed}};
    if (name == "car")
        return json{{"network", {{"preset", "car"}, {"seed", seed}}},
                    {"domain", {{0.0, 10.0}, {0.0, 2.0}, {-0.5, 0.5}}},
                    {"covariance", {{0.1, 0.0, 0.0}, {0.0, 0.1, 0.0}, {0.0, 0.0, 0.01}}},
                    {"grid", {25, 6, 10}},
                    {"regions",
                     {{{"label", "O"}, {"lo", {4.0, 0.0, -0.5}}, {"hi", {6.0, 1.0, 0.5}}},
                      {{"label", "D"}, {"lo", {8.0, 0.0, -0.5}}, {"hi", {10.0, 2.0, 0.5}}}}},
                    {"spec", {{"template", "reach_avoid"}, {"labels", {{"O", "O"}, {"D", "D"}}}}},
                    {"refinement", {{"rounds", 0}}},
                    {"seed", seed}};
    throw Error("synthesis_pipeline", "unknown configuration preset '" + name + "'");
}

} // namespace nndm
