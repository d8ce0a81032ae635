#pragma once

#include "nndm/common.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>

namespace nndm {

/// Axis-aligned box [lo, hi] in R^n.
struct HyperRect {
    Vector lo;
    Vector hi;

    HyperRect() = default;
    HyperRect(Vector lo_, Vector hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
        if (lo.size() != hi.size())
            throw Error("geometry", "box bounds have different dimensions");
        if (!lo.allFinite() || !hi.allFinite())
            throw Error("geometry", "box bounds must be finite");
        for (Eigen::Index l = 0; l < lo.size(); ++l)
            if (lo(l) > hi(l))
                throw Error("geometry", "box has lo > hi in dimension " + std::to_string(l));
    }

    Eigen::Index dim() const { return lo.size(); }
    Vector center() const { return 0.5 * (lo + hi); }
    Vector width() const { return hi - lo; }
    double volume() const { return (hi - lo).prod(); }

    bool contains(const Vector& x, double tol = 0.0) const {
        for (Eigen::Index l = 0; l < dim(); ++l)
            if (x(l) < lo(l) - tol || x(l) > hi(l) + tol)
                return false;
        return true;
    }

    bool contains(const HyperRect& other, double tol = 0.0) const {
        for (Eigen::Index l = 0; l < dim(); ++l)
            if (other.lo(l) < lo(l) - tol || other.hi(l) > hi(l) + tol)
                return false;
        return true;
    }

    /// Closed-interval intersection test: touching boundaries count.
    bool intersects(const HyperRect& other) const {
        for (Eigen::Index l = 0; l < dim(); ++l)
            if (other.hi(l) < lo(l) || other.lo(l) > hi(l))
                return false;
        return true;
    }

    /// Volume of the intersection (zero when the boxes only touch).
    double overlap_volume(const HyperRect& other) const {
        double v = 1.0;
        for (Eigen::Index l = 0; l < dim(); ++l) {
            const double w = std::min(hi(l), other.hi(l)) - std::max(lo(l), other.lo(l));
            if (w <= 0.0)
                return 0.0;
            v *= w;
        }
        return v;
    }

    /// Vertex indexed by a bitmask: bit l set selects hi(l).
    Vector vertex(std::uint64_t mask) const {
        Vector v(dim());
        for (Eigen::Index l = 0; l < dim(); ++l)
            v(l) = (mask >> l) & 1u ? hi(l) : lo(l);
        return v;
    }

    std::size_t num_vertices() const { return std::size_t{1} << dim(); }

    std::vector<Vector> vertices() const {
        std::vector<Vector> out;
        out.reserve(num_vertices());
        for (std::uint64_t m = 0; m < num_vertices(); ++m)
            out.push_back(vertex(m));
        return out;
    }

    bool operator==(const HyperRect& o) const { return lo == o.lo && hi == o.hi; }

    std::string str() const {
        std::ostringstream os;
        for (Eigen::Index l = 0; l < dim(); ++l)
            os << (l ? "x" : "") << "[" << lo(l) << "," << hi(l) << "]";
        return os.str();
    }
};

/// rect(a, b): the box spanned by two points.
inline HyperRect rect_of(const Vector& a, const Vector& b) {
    return HyperRect(a.cwiseMin(b), a.cwiseMax(b));
}

} // namespace nndm
