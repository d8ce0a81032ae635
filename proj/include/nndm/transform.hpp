#pragma once

#include "nndm/hyper_rect.hpp"
#include "nndm/nn_model.hpp"

#include <cmath>
#include <numeric>

namespace nndm {

/// Whitening map z = T x with T Sigma T^T = I.
struct Transform {
    Matrix T;
    Matrix T_inv;
    Matrix covariance;

    Eigen::Index dim() const { return T.rows(); }

    Vector forward(const Vector& x) const { return T * x; }
    Vector backward(const Vector& z) const { return T_inv * z; }

    /// True when T is a scaled permutation, i.e. it maps axis-aligned boxes
    /// onto axis-aligned boxes.
    bool axis_aligned() const {
        for (Eigen::Index r = 0; r < T.rows(); ++r) {
            const double scale = T.row(r).cwiseAbs().maxCoeff();
            int nonzero = 0;
            for (Eigen::Index c = 0; c < T.cols(); ++c)
                if (std::abs(T(r, c)) > 1e-12 * scale)
                    ++nonzero;
            if (nonzero != 1)
                return false;
        }
        return true;
    }

    /// Rectangular hull of the image of a box (exact when axis_aligned()).
    HyperRect image_box(const HyperRect& box) const { return hull_of_mapped(box, T); }
    HyperRect preimage_box(const HyperRect& box) const { return hull_of_mapped(box, T_inv); }

private:
    static HyperRect hull_of_mapped(const HyperRect& box, const Matrix& m) {
        // Interval arithmetic on a linear map is exact for the hull.
        const Vector c = m * box.center();
        const Vector r = m.cwiseAbs() * (0.5 * box.width());
        return HyperRect(c - r, c + r);
    }
};

/// T = Lambda^{-1/2} V^T from the eigendecomposition Sigma = V Lambda V^T.
/// Eigenvectors are ordered so that eigenvector i has its dominant component
/// on axis i (with positive sign); a diagonal Sigma therefore yields a
/// diagonal T.
inline Transform mahalanobis(const Matrix& covariance) {
    check_covariance(covariance, "geometry");
    const Eigen::Index n = covariance.rows();
    Transform t;
    t.covariance = covariance;

    const Matrix offdiag = covariance - Matrix(covariance.diagonal().asDiagonal());
    if (offdiag.cwiseAbs().maxCoeff() == 0.0) {
        if (covariance.diagonal().minCoeff() <= 0.0)
            throw Error("geometry", "covariance has a non-positive eigenvalue");
        t.T = covariance.diagonal().cwiseSqrt().cwiseInverse().asDiagonal();
        t.T_inv = covariance.diagonal().cwiseSqrt().asDiagonal();
        return t;
    }

    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
    if (eig.info() != Eigen::Success)
        throw Error("geometry", "eigendecomposition of the covariance failed");
    const Vector lambda = eig.eigenvalues();
    if (lambda.minCoeff() <= 0.0)
        throw Error("geometry", "covariance has a non-positive eigenvalue");
    const Matrix& v = eig.eigenvectors();

    // Greedy assignment of eigenvectors to axes by largest |component|.
    std::vector<Eigen::Index> slot_of(static_cast<std::size_t>(n), -1);
    std::vector<bool> axis_taken(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return v.col(a).cwiseAbs().maxCoeff() > v.col(b).cwiseAbs().maxCoeff();
    });
    for (Eigen::Index k : order) {
        Eigen::Index best = -1;
        for (Eigen::Index axis = 0; axis < n; ++axis)
            if (!axis_taken[static_cast<std::size_t>(axis)] &&
                (best < 0 || std::abs(v(axis, k)) > std::abs(v(best, k))))
                best = axis;
        axis_taken[static_cast<std::size_t>(best)] = true;
        slot_of[static_cast<std::size_t>(k)] = best;
    }

    t.T = Matrix::Zero(n, n);
    t.T_inv = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index row = slot_of[static_cast<std::size_t>(k)];
        Vector vk = v.col(k);
        if (vk(row) < 0.0)
            vk = -vk;
        t.T.row(row) = vk.transpose() / std::sqrt(lambda(k));
        t.T_inv.col(row) = vk * std::sqrt(lambda(k));
    }
    return t;
}

} // namespace nndm
