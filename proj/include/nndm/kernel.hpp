#pragma once

// Box probability of a unit-covariance Gaussian:
//   g(z) = prod_l P( N(z_l, 1) in [lo_l, hi_l] )
//        = 2^-n prod_l [ erf((z_l - lo_l)/sqrt2) - erf((z_l - hi_l)/sqrt2) ].

#include "nndm/hyper_rect.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace nndm {

struct KernelTarget {
    Vector lo;
    Vector hi;
    Vector center;

    KernelTarget() = default;
    KernelTarget(const Vector& lo_, const Vector& hi_) : lo(lo_), hi(hi_), center(0.5 * (lo_ + hi_)) {}
    explicit KernelTarget(const HyperRect& box) : KernelTarget(box.lo, box.hi) {}

    Eigen::Index dim() const { return lo.size(); }
};

/// P( N(z, 1) in [a, b] ), evaluated on the tail side with erfc so that
/// far-away intervals do not cancel to zero prematurely.
inline double interval_mass(double z, double a, double b) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double s = (a - z) * inv_sqrt2;
    const double t = (b - z) * inv_sqrt2;
    if (s >= 0.0)
        return 0.5 * (std::erfc(s) - std::erfc(t));
    if (t <= 0.0)
        return 0.5 * (std::erfc(-t) - std::erfc(-s));
    return 0.5 * (std::erf(t) - std::erf(s));
}

inline double kernel_g(const Vector& z, const KernelTarget& target) {
    double p = 1.0;
    for (Eigen::Index l = 0; l < z.size(); ++l) {
        p *= interval_mass(z(l), target.lo(l), target.hi(l));
        if (p == 0.0)
            break;
    }
    return p;
}

namespace detail {

/// log(erfc(x)), continued asymptotically where erfc underflows.
inline double log_erfc(double x) {
    if (x < 26.0)
        return std::log(std::erfc(x));
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
    return -x2 - std::log(x * std::sqrt(std::numbers::pi)) + std::log(series);
}

inline double log_normal_pdf(double u) { return -0.5 * u * u - 0.5 * std::log(2.0 * std::numbers::pi); }

} // namespace detail

/// log P(N(z,1) in [a,b]) and its derivative with respect to z.
struct LogMass {
    double value;
    double slope;
};

inline LogMass log_interval_mass(double z, double a, double b) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double s = (a - z) * inv_sqrt2;
    const double t = (b - z) * inv_sqrt2;
    double log_mass;
    if (s >= 0.0 || t <= 0.0) {
        // Mirror the left tail onto the right one.
        const double near = s >= 0.0 ? s : -t;
        const double far = s >= 0.0 ? t : -s;
        const double ln = detail::log_erfc(near);
        const double lf = detail::log_erfc(far);
        log_mass = std::log(0.5) + ln + std::log1p(-std::exp(lf - ln));
    } else {
        log_mass = std::log(0.5 * (std::erf(t) - std::erf(s)));
    }
    const double slope = std::exp(detail::log_normal_pdf(a - z) - log_mass) -
                         std::exp(detail::log_normal_pdf(b - z) - log_mass);
    return {log_mass, slope};
}

/// log g(z) and its gradient.
inline double log_kernel_g(const Vector& z, const KernelTarget& target, Vector* gradient = nullptr) {
    double total = 0.0;
    if (gradient)
        gradient->resize(z.size());
    for (Eigen::Index l = 0; l < z.size(); ++l) {
        const LogMass m = log_interval_mass(z(l), target.lo(l), target.hi(l));
        total += m.value;
        if (gradient)
            (*gradient)(l) = m.slope;
    }
    return total;
}

} // namespace nndm
