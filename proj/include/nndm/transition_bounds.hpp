#pragma once

// IMDP transition-probability bounds from post-image overapproximations.

#include "nndm/geometry.hpp"
#include "nndm/imdp.hpp"
#include "nndm/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace nndm {

/// Minimum of g over conv(vertices). g is log-concave, so the minimum over
/// the hull sits at one of its vertices; scanning a superset of the true
/// vertices (all of which lie in the hull) returns the same value.
inline double min_over_hull(const Polytope& hull, const KernelTarget& target) {
    if (hull.vertices.empty())
        throw Error("transition_bounds", "empty vertex set");
    double best = 1.0;
    for (const auto& v : hull.vertices)
        best = std::min(best, kernel_g(v, target));
    return best;
}

/// Points of the rect hull [z_lo, z_hi] where g is provably minimal / maximal
/// per dimension: the farthest endpoint from the target center, and the
/// center clamped into the interval.
struct ExtremePoints {
    Vector z_min;
    Vector z_max;
};

inline ExtremePoints rect_extreme_points(const HyperRect& hull_rect, const KernelTarget& target) {
    const Eigen::Index n = hull_rect.dim();
    ExtremePoints p{Vector(n), Vector(n)};
    for (Eigen::Index l = 0; l < n; ++l) {
        const double lo = hull_rect.lo(l), hi = hull_rect.hi(l), c = target.center(l);
        p.z_min(l) = std::abs(lo - c) >= std::abs(hi - c) ? lo : hi;
        p.z_max(l) = std::clamp(c, lo, hi);
    }
    return p;
}

namespace detail {

// Euclidean projection onto the probability simplex.
inline Vector project_to_simplex(const Vector& y) {
    std::vector<double> u(y.data(), y.data() + y.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cumulative += u[i];
        const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0)
            theta = t;
    }
    return (y.array() - theta).cwiseMax(0.0).matrix();
}

} // namespace detail

struct HullMaxOptions {
    double tolerance = 1e-9;
    std::size_t max_iterations = 200;
};

/// Upper bound on max over conv(vertices) of g.
///
/// Projected gradient ascent of log g over barycentric weights. At the final
/// iterate z, concavity of log g gives the certificate
///   max log g <= log g(z) + max_i grad(z) . (v_i - z),
/// so the returned value never undercuts the true maximum. It is clamped
/// below by the best vertex and above by the rect-hull bound g(z_max).
inline double max_over_hull(const Polytope& hull, const KernelTarget& target, const HullMaxOptions& opts = {}) {
    if (hull.vertices.empty())
        throw Error("transition_bounds", "empty vertex set");
    const std::size_t m = hull.vertices.size();
    const Eigen::Index n = target.dim();
    Matrix V(n, static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i)
        V.col(static_cast<Eigen::Index>(i)) = hull.vertices[i];

    double best_vertex = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double g = kernel_g(hull.vertices[i], target);
        if (g > best_vertex) {
            best_vertex = g;
            start = i;
        }
    }
    const double rect_bound = kernel_g(rect_extreme_points(rect_hull(hull), target).z_max, target);
    if (best_vertex <= 0.0 || m == 1)
        return m == 1 ? best_vertex : rect_bound;

    Vector lambda = Vector::Zero(static_cast<Eigen::Index>(m));
    lambda(static_cast<Eigen::Index>(start)) = 1.0;
    Vector z = V * lambda;
    Vector grad;
    double phi = log_kernel_g(z, target, &grad);
    double certificate = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        const Vector dir = V.transpose() * grad; // gradient with respect to lambda
        const double gap = dir.maxCoeff() - dir.dot(lambda);
        certificate = std::min(certificate, phi + std::max(0.0, gap));
        if (gap < opts.tolerance)
            break;
        double step = 1.0;
        bool improved = false;
        for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
            const Vector cand = detail::project_to_simplex(lambda + step * dir);
            const Vector zc = V * cand;
            Vector gc;
            const double pc = log_kernel_g(zc, target, &gc);
            if (std::isfinite(pc) && pc >= phi + 1e-4 * dir.dot(cand - lambda)) {
                lambda = cand;
                z = zc;
                phi = pc;
                grad = gc;
                improved = true;
                break;
            }
        }
        if (!improved)
            break;
    }
    {
        const Vector dir = V.transpose() * grad;
        certificate = std::min(certificate, phi + std::max(0.0, dir.maxCoeff() - dir.dot(lambda)));
    }
    const double upper = std::isfinite(certificate) ? std::exp(certificate) : rect_bound;
    return std::clamp(std::min(upper, rect_bound), best_vertex, 1.0);
}

// ---------------------------------------------------------------------------
// Grouping of target cells relative to the rect hull of a post image
// ---------------------------------------------------------------------------

struct TargetGroup {
    std::vector<std::size_t> members; // ascending cell ids
    bool overlaps_hull = false;
};

/// Per dimension, each cell interval lies below, overlaps (closed
/// intersection) or lies above the hull interval. Below-intervals and
/// above-intervals merge into one class each; overlapping intervals are kept
/// apart. Cells with equal classes in every dimension form a group and share
/// z_min and z_max.
inline std::vector<TargetGroup> group_regions(const std::vector<HyperRect>& cells, const HyperRect& hull_rect) {
    const Eigen::Index n = hull_rect.dim();
    std::vector<std::map<std::pair<double, double>, int>> overlap_ids(static_cast<std::size_t>(n));
    std::map<std::vector<int>, std::size_t> group_of_key;
    std::vector<TargetGroup> groups;
    std::vector<int> key(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const HyperRect& c = cells[i];
        bool all_overlap = true;
        for (Eigen::Index l = 0; l < n; ++l) {
            int k;
            if (c.hi(l) < hull_rect.lo(l)) {
                k = 0;
                all_overlap = false;
            } else if (c.lo(l) > hull_rect.hi(l)) {
                k = 1;
                all_overlap = false;
            } else {
                auto& ids = overlap_ids[static_cast<std::size_t>(l)];
                auto [it, inserted] = ids.emplace(std::make_pair(c.lo(l), c.hi(l)), static_cast<int>(ids.size()) + 2);
                k = it->second;
            }
            key[static_cast<std::size_t>(l)] = k;
        }
        auto [it, inserted] = group_of_key.emplace(key, groups.size());
        if (inserted)
            groups.push_back(TargetGroup{{}, all_overlap});
        groups[it->second].members.push_back(i);
    }
    return groups;
}

// ---------------------------------------------------------------------------
// Rows
// ---------------------------------------------------------------------------

struct RowOptions {
    /// Lower bounds below this are floored to zero; targets whose upper bound
    /// is below it are pruned into the row residual.
    double prune_threshold = 1e-12;
};

/// Post-image overapproximation of one (cell, action) pair.
struct PostImage {
    LinearBounds bounds;
    Polytope candidates;
    HyperRect rect;
};

inline PostImage make_post_image(LinearBounds bounds, const HyperRect& cell) {
    Polytope p = post_image_hull(bounds, cell);
    HyperRect r = rect_hull(p);
    return PostImage{std::move(bounds), std::move(p), std::move(r)};
}

struct RawBound {
    double lower;
    double upper;
};

/// Row before the feasibility repair: kept targets (sorted, lower bounds
/// already floored) and the number of pruned targets.
struct RawRow {
    std::vector<BoundEntry> entries;
    std::size_t pruned = 0;

    bool operator==(const RawRow&) const = default;
};

namespace detail {

inline RawBound bound_for_target(const PostImage& post, const KernelTarget& target, const ExtremePoints& z,
                                 bool overlaps) {
    const double hi = kernel_g(z.z_max, target);
    const double lo = overlaps ? min_over_hull(post.candidates, target) : kernel_g(z.z_min, target);
    return {lo, hi};
}

inline RawBound unsafe_bound(const PostImage& post, const HyperRect& domain) {
    const KernelTarget dom(domain);
    const ExtremePoints z = rect_extreme_points(post.rect, dom);
    return {std::clamp(1.0 - kernel_g(z.z_max, dom), 0.0, 1.0), std::clamp(1.0 - kernel_g(z.z_min, dom), 0.0, 1.0)};
}

/// Either prunes the target or returns its entry.
inline std::optional<BoundEntry> make_entry(std::size_t target, RawBound b, const RowOptions& opts) {
    const double hi = std::clamp(b.upper, 0.0, 1.0);
    if (hi < opts.prune_threshold)
        return std::nullopt;
    double lo = std::clamp(b.lower, 0.0, 1.0);
    if (lo < opts.prune_threshold)
        lo = 0.0;
    return BoundEntry{target, std::min(lo, hi), hi};
}

} // namespace detail

/// Residual, feasibility check and rounding repair. The unsafe state is the
/// target with id `unsafe`.
inline TransitionBoundRow finalize_row(std::size_t source, std::size_t action, const RawRow& raw, std::size_t unsafe,
                                       const RowOptions& opts = {}) {
    TransitionBoundRow row{source, action, raw.entries, static_cast<double>(raw.pruned) * opts.prune_threshold};
    const double total = row.sum_upper();
    if (total < 1.0) {
        if (total < 1.0 - 1e-9)
            throw Error("transition_bounds", "infeasible row for state " + std::to_string(source) +
                                                 ": upper bounds sum to " + std::to_string(total));
        // Rounding deficit: widen the q_u upper bound.
        const double deficit = 1.0 - total;
        auto it = std::find_if(row.entries.begin(), row.entries.end(),
                               [&](const BoundEntry& e) { return e.target == unsafe; });
        if (it == row.entries.end())
            row.entries.push_back({unsafe, 0.0, std::min(1.0, deficit)});
        else
            it->upper = std::min(1.0, it->upper + deficit);
    }
    if (row.sum_lower() > 1.0 + 1e-9)
        throw Error("transition_bounds", "infeasible row for state " + std::to_string(source) +
                                             ": lower bounds sum above one");
    return row;
}

/// Raw row of a post image via grouped targets: one z_min/z_max computation
/// per group; the lower bound of targets overlapping the rect hull comes from
/// vertex enumeration of the hull.
inline RawRow compute_raw_row(const RegionGrid& grid, const PostImage& post, const RowOptions& opts = {}) {
    const auto& cells = grid.cells();
    std::vector<RawBound> raw(cells.size());
    for (const TargetGroup& group : group_regions(cells, post.rect)) {
        const ExtremePoints z = rect_extreme_points(post.rect, KernelTarget(cells[group.members.front()]));
        for (std::size_t t : group.members)
            raw[t] = detail::bound_for_target(post, KernelTarget(cells[t]), z, group.overlaps_hull);
    }
    raw.push_back(detail::unsafe_bound(post, grid.domain()));
    RawRow out;
    for (std::size_t t = 0; t < raw.size(); ++t) {
        if (auto e = detail::make_entry(t, raw[t], opts))
            out.entries.push_back(*e);
        else
            ++out.pruned;
    }
    return out;
}

inline TransitionBoundRow compute_row(const RegionGrid& grid, const PostImage& post, std::size_t source,
                                      std::size_t action, const RowOptions& opts = {}) {
    return finalize_row(source, action, compute_raw_row(grid, post, opts), grid.unsafe_id(), opts);
}

/// Same row computed target by target, without grouping.
inline TransitionBoundRow compute_row_naive(const RegionGrid& grid, const PostImage& post, std::size_t source,
                                            std::size_t action, const RowOptions& opts = {}) {
    const auto& cells = grid.cells();
    RawRow out;
    auto add = [&](std::size_t t, RawBound b) {
        if (auto e = detail::make_entry(t, b, opts))
            out.entries.push_back(*e);
        else
            ++out.pruned;
    };
    for (std::size_t t = 0; t < cells.size(); ++t) {
        const KernelTarget target(cells[t]);
        const ExtremePoints z = rect_extreme_points(post.rect, target);
        add(t, detail::bound_for_target(post, target, z, cells[t].intersects(post.rect)));
    }
    add(cells.size(), detail::unsafe_bound(post, grid.domain()));
    return finalize_row(source, action, out, grid.unsafe_id(), opts);
}

} // namespace nndm
