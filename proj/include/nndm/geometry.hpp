#pragma once

// Grid abstraction of the transformed domain, labeling, point location and
// the vertex-rectangle overapproximation of one-step post images.

#include "nndm/hyper_rect.hpp"
#include "nndm/linear_relaxation.hpp"
#include "nndm/transform.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace nndm {

/// Sorted, duplicate-free set of atomic propositions.
using LabelSet = std::vector<std::string>;

/// Reserved proposition carried by the out-of-domain state.
inline const std::string unsafe_label = "unsafe";

inline LabelSet make_label_set(std::vector<std::string> props) {
    std::sort(props.begin(), props.end());
    props.erase(std::unique(props.begin(), props.end()), props.end());
    return props;
}

inline std::string join_labels(const LabelSet& labels, const std::string& sep = "|") {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        out += (i ? sep : "") + labels[i];
    return out;
}

struct RegionOfInterest {
    std::string label;
    HyperRect box; // original coordinates
};

/// Guillotine-partition point locator (binary space partition over cells).
class CellLocator {
public:
    CellLocator() = default;

    CellLocator(const std::vector<HyperRect>& cells, const HyperRect& domain) : domain_(domain) {
        if (cells.empty())
            return;
        std::vector<std::size_t> ids(cells.size());
        std::iota(ids.begin(), ids.end(), 0);
        root_ = build(cells, ids);
    }

    /// Cell containing z (transformed coordinates); nullopt outside the domain.
    std::optional<std::size_t> locate(const Vector& z) const {
        if (root_ < 0 || !domain_.contains(z))
            return std::nullopt;
        int node = root_;
        while (nodes_[static_cast<std::size_t>(node)].cell < 0) {
            const Node& n = nodes_[static_cast<std::size_t>(node)];
            node = z(n.dim) < n.cut ? n.left : n.right;
        }
        return static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].cell);
    }

private:
    struct Node {
        Eigen::Index dim = 0;
        double cut = 0.0;
        int left = -1;
        int right = -1;
        long cell = -1;
    };

    int build(const std::vector<HyperRect>& cells, std::vector<std::size_t> ids) {
        if (ids.size() == 1) {
            nodes_.push_back(Node{0, 0.0, -1, -1, static_cast<long>(ids.front())});
            return static_cast<int>(nodes_.size() - 1);
        }
        const Eigen::Index n = cells[ids.front()].dim();
        Eigen::Index best_dim = -1;
        double best_cut = 0.0;
        std::size_t best_balance = ids.size();
        for (Eigen::Index l = 0; l < n; ++l) {
            std::vector<std::size_t> order = ids;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return cells[a].lo(l) < cells[b].lo(l); });
            double max_hi = cells[order.front()].hi(l);
            for (std::size_t k = 1; k < order.size(); ++k) {
                const double cut = cells[order[k]].lo(l);
                if (max_hi <= cut && cells[order[k - 1]].lo(l) < cut) {
                    const std::size_t balance =
                        k > order.size() / 2 ? k - order.size() / 2 : order.size() / 2 - k;
                    if (balance < best_balance) {
                        best_balance = balance;
                        best_dim = l;
                        best_cut = cut;
                    }
                }
                max_hi = std::max(max_hi, cells[order[k]].hi(l));
            }
        }
        if (best_dim < 0)
            throw Error("geometry", "cells do not form a guillotine partition");
        std::vector<std::size_t> left, right;
        for (std::size_t id : ids)
            (cells[id].lo(best_dim) < best_cut ? left : right).push_back(id);
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{best_dim, best_cut, -1, -1, -1});
        const int l = build(cells, std::move(left));
        const int r = build(cells, std::move(right));
        nodes_[static_cast<std::size_t>(self)].left = l;
        nodes_[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    HyperRect domain_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Partition of the transformed domain into axis-aligned cells, plus the
/// virtual out-of-domain state q_u whose id is cells.size().
class RegionGrid {
public:
    RegionGrid(Transform transform, HyperRect original_domain, HyperRect domain,
               std::vector<RegionOfInterest> regions, std::vector<HyperRect> cells)
        : transform_(std::move(transform)), original_domain_(std::move(original_domain)),
          domain_(std::move(domain)), regions_(std::move(regions)), cells_(std::move(cells)) {
        labels_.reserve(cells_.size());
        for (const auto& c : cells_)
            labels_.push_back(label_at_transformed(c.center()));
        rebuild_locator();
    }

    std::size_t num_cells() const { return cells_.size(); }
    std::size_t num_states() const { return cells_.size() + 1; }
    std::size_t unsafe_id() const { return cells_.size(); }
    Eigen::Index dim() const { return domain_.dim(); }

    const std::vector<HyperRect>& cells() const { return cells_; }
    const HyperRect& cell(std::size_t i) const { return cells_.at(i); }
    const HyperRect& domain() const { return domain_; }
    const HyperRect& original_domain() const { return original_domain_; }
    const Transform& transform() const { return transform_; }
    const std::vector<RegionOfInterest>& regions() const { return regions_; }

    /// Label of a state; q_u carries {"unsafe"}.
    LabelSet label(std::size_t state) const {
        if (state == unsafe_id())
            return {unsafe_label};
        return labels_.at(state);
    }
    const std::vector<LabelSet>& cell_labels() const { return labels_; }

    /// L(x) for a point in original coordinates.
    LabelSet label_at(const Vector& x) const {
        std::vector<std::string> props;
        for (const auto& r : regions_)
            if (r.box.contains(x))
                props.push_back(r.label);
        return make_label_set(std::move(props));
    }

    LabelSet label_at_transformed(const Vector& z) const { return label_at(transform_.backward(z)); }

    std::optional<std::size_t> locate_transformed(const Vector& z) const { return locator_.locate(z); }
    std::optional<std::size_t> locate(const Vector& x) const { return locator_.locate(transform_.forward(x)); }

    /// Splits cell i at the midpoint of `dim`: the lower half keeps id i, the
    /// upper half is appended. Returns the id of the appended cell.
    std::size_t split(std::size_t i, Eigen::Index dim) {
        HyperRect& c = cells_.at(i);
        const double mid = 0.5 * (c.lo(dim) + c.hi(dim));
        if (!(mid > c.lo(dim) && mid < c.hi(dim)))
            throw Error("refinement", "cell " + std::to_string(i) + " cannot be split in dimension " +
                                          std::to_string(dim));
        HyperRect upper = c;
        upper.lo(dim) = mid;
        c.hi(dim) = mid;
        cells_.push_back(upper);
        labels_.push_back(labels_[i]);
        return cells_.size() - 1;
    }

    void rebuild_locator() { locator_ = CellLocator(cells_, domain_); }

private:
    Transform transform_;
    HyperRect original_domain_;
    HyperRect domain_;
    std::vector<RegionOfInterest> regions_;
    std::vector<HyperRect> cells_;
    std::vector<LabelSet> labels_;
    CellLocator locator_;
};

/// Uniform grid over T(domain), additionally cut along every region boundary.
inline RegionGrid build_grid(const HyperRect& domain_orig, const Transform& transform,
                             const std::vector<std::size_t>& counts,
                             const std::vector<RegionOfInterest>& regions) {
    const Eigen::Index n = domain_orig.dim();
    if (transform.dim() != n)
        throw Error("geometry", "transform and domain dimensions differ");
    if (counts.size() != static_cast<std::size_t>(n))
        throw Error("geometry", "need one cell count per dimension");
    for (std::size_t c : counts)
        if (c == 0)
            throw Error("geometry", "cell counts must be positive");
    const bool proper = transform.axis_aligned();
    if (!proper && !regions.empty())
        throw Error("geometry", "regions of interest are not axis-aligned in transformed coordinates "
                                "(non-diagonal noise covariance)");

    const HyperRect domain = transform.image_box(domain_orig);
    std::vector<std::vector<double>> cuts(static_cast<std::size_t>(n));
    for (Eigen::Index l = 0; l < n; ++l) {
        const std::size_t count = counts[static_cast<std::size_t>(l)];
        const double lo = domain.lo(l), hi = domain.hi(l);
        auto& c = cuts[static_cast<std::size_t>(l)];
        for (std::size_t k = 0; k <= count; ++k)
            c.push_back(k == count ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count));
        // Region boundaries replace any uniform cut closer than `snap`.
        const double snap = 1e-9 * (hi - lo);
        for (const auto& r : regions) {
            if (r.box.dim() != n)
                throw Error("geometry", "region '" + r.label + "' has the wrong dimension");
            const HyperRect img = transform.image_box(r.box);
            for (double b : {img.lo(l), img.hi(l)}) {
                if (b <= lo + snap || b >= hi - snap)
                    continue;
                auto near = std::find_if(c.begin(), c.end(), [&](double x) { return std::abs(x - b) <= snap; });
                if (near != c.end())
                    *near = b;
                else
                    c.push_back(b);
            }
        }
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
    }

    std::vector<HyperRect> cells;
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    while (true) {
        Vector lo(n), hi(n);
        for (Eigen::Index l = 0; l < n; ++l) {
            lo(l) = cuts[static_cast<std::size_t>(l)][idx[static_cast<std::size_t>(l)]];
            hi(l) = cuts[static_cast<std::size_t>(l)][idx[static_cast<std::size_t>(l)] + 1];
        }
        cells.emplace_back(lo, hi);
        Eigen::Index l = n - 1;
        for (; l >= 0; --l) {
            auto& i = idx[static_cast<std::size_t>(l)];
            if (++i + 1 < cuts[static_cast<std::size_t>(l)].size())
                break;
            i = 0;
        }
        if (l < 0)
            break;
    }
    return RegionGrid(transform, domain_orig, domain, regions, std::move(cells));
}

/// Finite point set whose convex hull is the polytope.
struct Polytope {
    std::vector<Vector> vertices;
};

/// Vertex candidates of conv(H), H = { rect(f_lo(v), f_hi(v)) : v vertex of cell }.
inline Polytope post_image_hull(const LinearBounds& bounds, const HyperRect& cell) {
    Polytope p;
    const std::size_t nv = cell.num_vertices();
    p.vertices.reserve(nv * nv);
    for (std::uint64_t m = 0; m < nv; ++m) {
        const Vector v = cell.vertex(m);
        const HyperRect r = rect_of(bounds.lower(v), bounds.upper(v));
        for (std::uint64_t k = 0; k < nv; ++k)
            p.vertices.push_back(r.vertex(k));
    }
    return p;
}

inline HyperRect rect_hull(const Polytope& p) {
    if (p.vertices.empty())
        throw Error("geometry", "rect hull of an empty polytope");
    Vector lo = p.vertices.front(), hi = p.vertices.front();
    for (const auto& v : p.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return HyperRect(lo, hi);
}

} // namespace nndm
