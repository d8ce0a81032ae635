#pragma once

// Backward linear bound propagation: affine maps A_lo z + b_lo and
// A_hi z + b_hi that bracket z -> T f_a(T^{-1} z) over a box of z.

#include "nndm/hyper_rect.hpp"
#include "nndm/nn_model.hpp"
#include "nndm/transform.hpp"

#include <cmath>
#include <utility>

namespace nndm {

struct LinearBounds {
    Matrix A_lo;
    Vector b_lo;
    Matrix A_hi;
    Vector b_hi;
    HyperRect region;

    Vector lower(const Vector& z) const { return A_lo * z + b_lo; }
    Vector upper(const Vector& z) const { return A_hi * z + b_hi; }
};

/// A line y = slope * x + intercept.
struct Line {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double x) const { return slope * x + intercept; }
};

/// Lower and upper lines bounding an activation over [l, u].
struct NeuronRelaxation {
    Line lower;
    Line upper;
};

namespace detail {

inline Line chord(Activation act, double l, double u) {
    const double fl = activate(act, l);
    const double fu = activate(act, u);
    const double slope = (fu - fl) / (u - l);
    return {slope, fl - slope * l};
}

inline Line tangent(Activation act, double d) {
    const double slope = activate_derivative(act, d);
    return {slope, activate(act, d) - slope * d};
}

// Sigmoid and tanh are convex on (-inf, 0] and concave on [0, inf).
inline NeuronRelaxation relax_s_shaped(Activation act, double l, double u) {
    constexpr double bisection_tol = 1e-12;
    if (u - l < 1e-12) // monotone, so the endpoint values bracket the range
        return {{0.0, activate(act, l)}, {0.0, activate(act, u)}};
    const double mid = 0.5 * (l + u);
    if (u <= 0.0)
        return {tangent(act, mid), chord(act, l, u)};
    if (l >= 0.0)
        return {chord(act, l, u), tangent(act, mid)};

    NeuronRelaxation r;
    // Upper: tangent at d >= 0 is sound iff it passes above (l, f(l)); the
    // gap at l grows with d, so bisect for the smallest sound d.
    const double fl = activate(act, l);
    auto upper_gap = [&](double d) { return tangent(act, d)(l) - fl; };
    if (upper_gap(u) <= 0.0) {
        r.upper = chord(act, l, u);
    } else {
        double a = 0.0, b = u;
        while (b - a > bisection_tol) {
            const double m = 0.5 * (a + b);
            (upper_gap(m) >= 0.0 ? b : a) = m;
        }
        r.upper = tangent(act, b);
    }
    // Lower: tangent at d <= 0 is sound iff it passes below (u, f(u)).
    const double fu = activate(act, u);
    auto lower_gap = [&](double d) { return tangent(act, d)(u) - fu; };
    if (lower_gap(l) >= 0.0) {
        r.lower = chord(act, l, u);
    } else {
        double a = l, b = 0.0;
        while (b - a > bisection_tol) {
            const double m = 0.5 * (a + b);
            (lower_gap(m) <= 0.0 ? a : b) = m;
        }
        r.lower = tangent(act, a);
    }
    return r;
}

} // namespace detail

/// Sound linear relaxation of one neuron whose pre-activation lies in [l, u].
inline NeuronRelaxation relax_neuron(Activation act, double l, double u) {
    switch (act) {
    case Activation::linear: return {{1.0, 0.0}, {1.0, 0.0}};
    case Activation::relu:
        if (l >= 0.0)
            return {{1.0, 0.0}, {1.0, 0.0}};
        if (u <= 0.0)
            return {{0.0, 0.0}, {0.0, 0.0}};
        {
            const double slope = u / (u - l);
            const double lower_slope = u >= -l ? 1.0 : 0.0;
            return {{lower_slope, 0.0}, {slope, -slope * l}};
        }
    case Activation::sigmoid:
    case Activation::tanh: return detail::relax_s_shaped(act, l, u);
    }
    return {{1.0, 0.0}, {1.0, 0.0}};
}

namespace detail {

struct LayerRelaxation {
    Vector lo_slope, lo_icpt, hi_slope, hi_icpt;
};

struct AffineBounds {
    Matrix A_lo, A_hi;
    Vector c_lo, c_hi;
};

class BackwardPropagator {
public:
    BackwardPropagator(const Network& net, const Matrix& T, const Matrix& T_inv, const HyperRect& region)
        : region_(region), output_map_(T) {
        weights_.reserve(net.size());
        for (std::size_t k = 0; k < net.size(); ++k) {
            weights_.push_back(k == 0 ? Matrix(net[k].weights * T_inv) : net[k].weights);
            biases_.push_back(net[k].bias);
            activations_.push_back(net[k].activation);
        }
        relaxations_.resize(net.size());
    }

    LinearBounds run() {
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const std::size_t width = static_cast<std::size_t>(weights_[k].rows());
            LayerRelaxation& rel = relaxations_[k];
            rel.lo_slope.resize(static_cast<Eigen::Index>(width));
            rel.lo_icpt.resize(static_cast<Eigen::Index>(width));
            rel.hi_slope.resize(static_cast<Eigen::Index>(width));
            rel.hi_icpt.resize(static_cast<Eigen::Index>(width));
            Vector pre_lo, pre_hi;
            if (activations_[k] != Activation::linear) {
                const AffineBounds pre = pre_activation(k);
                pre_lo = concretize_lower(pre);
                pre_hi = concretize_upper(pre);
            }
            for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(width); ++i) {
                const NeuronRelaxation nr =
                    activations_[k] == Activation::linear
                        ? relax_neuron(Activation::linear, 0.0, 0.0)
                        : relax_neuron(activations_[k], pre_lo(i), std::max(pre_lo(i), pre_hi(i)));
                rel.lo_slope(i) = nr.lower.slope;
                rel.lo_icpt(i) = nr.lower.intercept;
                rel.hi_slope(i) = nr.upper.slope;
                rel.hi_icpt(i) = nr.upper.intercept;
            }
        }
        const Eigen::Index n = output_map_.rows();
        const AffineBounds out = walk_back(output_map_, Vector::Zero(n), weights_.size());
        return LinearBounds{out.A_lo, out.c_lo, out.A_hi, out.c_hi, region_};
    }

private:
    // Bounds of y_k = W_k h_{k-1} + b_k over z: walk back through layers k-1 .. 0.
    AffineBounds pre_activation(std::size_t k) const {
        return walk_back(weights_[k], biases_[k], k);
    }

    AffineBounds walk_back(const Matrix& lam, const Vector& c, std::size_t layers) const {
        Matrix lo = lam, hi = lam;
        Vector blo = c, bhi = c;
        for (std::size_t j = layers; j-- > 0;) {
            through_activation(lo, hi, blo, bhi, relaxations_[j]);
            blo += lo * biases_[j];
            bhi += hi * biases_[j];
            lo = lo * weights_[j];
            hi = hi * weights_[j];
        }
        return {lo, hi, blo, bhi};
    }

    static void through_activation(Matrix& lo, Matrix& hi, Vector& blo, Vector& bhi, const LayerRelaxation& rel) {
        const Matrix hi_pos = hi.cwiseMax(0.0);
        const Matrix hi_neg = hi.cwiseMin(0.0);
        const Matrix lo_pos = lo.cwiseMax(0.0);
        const Matrix lo_neg = lo.cwiseMin(0.0);
        bhi += hi_pos * rel.hi_icpt + hi_neg * rel.lo_icpt;
        blo += lo_pos * rel.lo_icpt + lo_neg * rel.hi_icpt;
        hi = hi_pos * rel.hi_slope.asDiagonal();
        hi += hi_neg * rel.lo_slope.asDiagonal();
        lo = lo_pos * rel.lo_slope.asDiagonal();
        lo += lo_neg * rel.hi_slope.asDiagonal();
    }

    Vector concretize_lower(const AffineBounds& b) const {
        const Vector c = region_.center();
        const Vector r = 0.5 * region_.width();
        return b.A_lo * c - b.A_lo.cwiseAbs() * r + b.c_lo;
    }

    Vector concretize_upper(const AffineBounds& b) const {
        const Vector c = region_.center();
        const Vector r = 0.5 * region_.width();
        return b.A_hi * c + b.A_hi.cwiseAbs() * r + b.c_hi;
    }

    HyperRect region_;
    Matrix output_map_;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
    std::vector<Activation> activations_;
    std::vector<LayerRelaxation> relaxations_;
};

} // namespace detail

/// Linear bounds of z -> T f_a(T^{-1} z) valid for every z in `region`
/// (region given in transformed coordinates).
inline LinearBounds relax(const NeuralDynamics& nd, std::size_t action, const Transform& transform,
                          const HyperRect& region) {
    if (region.dim() != nd.dim() || transform.dim() != nd.dim())
        throw Error("linear_relaxation", "dimension mismatch between network, transform and region");
    if (!(transform.T * transform.T_inv).isApprox(Matrix::Identity(nd.dim(), nd.dim()), 1e-9))
        throw Error("linear_relaxation", "transform and inverse are inconsistent");
    detail::BackwardPropagator prop(nd.network(action), transform.T, transform.T_inv, region);
    return prop.run();
}

/// Convenience overload computing T^{-1}; rejects singular transforms.
inline LinearBounds relax(const NeuralDynamics& nd, std::size_t action, const Matrix& T, const HyperRect& region) {
    Eigen::FullPivLU<Matrix> lu(T);
    if (T.rows() != T.cols() || !lu.isInvertible())
        throw Error("linear_relaxation", "transform is singular");
    Transform t{T, lu.inverse(), Matrix::Identity(T.rows(), T.cols())};
    return relax(nd, action, t, region);
}

} // namespace nndm
