#pragma once

// Synthesis-driven refinement: score cells by satisfaction gap times incoming
// transition uncertainty, split the worst ones along their most expanding
// dimension, and update the abstraction incrementally.

#include "nndm/abstraction.hpp"
#include "nndm/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nndm {

enum class SplitRule {
    edge_endpoints, // bounding matrices applied to the endpoints of each edge
    diagonal,       // image of the cell's lo/hi corner pair over each edge length
};

inline SplitRule parse_split_rule(const std::string& s) {
    if (s == "edge_endpoints")
        return SplitRule::edge_endpoints;
    if (s == "diagonal")
        return SplitRule::diagonal;
    throw Error("refinement", "unknown split rule '" + s + "'");
}

struct RefinementConfig {
    std::size_t n_ref = 1;
    double n_ref_fraction = 0.0; // when positive, n_ref = ceil(fraction * cells)
    std::size_t rounds = 0;
    double stop_width = 0.0;     // stop once the mean interval width is below this
    SplitRule rule = SplitRule::edge_endpoints;

    std::size_t count_for(std::size_t cells) const {
        if (n_ref_fraction > 0.0)
            return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(n_ref_fraction * static_cast<double>(cells))));
        return n_ref;
    }
};

struct ScoreEntry {
    std::size_t state;
    double score;
};

/// theta(q) = (p_upper(q) - p_lower(q)) * sum over incoming (q', a) of
/// (upper - lower), for every cell q (the unsafe state is not scored).
/// Sorted by descending score, ties by state id.
inline std::vector<ScoreEntry> score_states(const Imdp& imdp, const std::vector<double>& p_lower,
                                            const std::vector<double>& p_upper, std::size_t unsafe_state) {
    std::vector<double> incoming(imdp.num_states(), 0.0);
    for (std::size_t s = 0; s < imdp.num_states(); ++s) {
        if (s == unsafe_state)
            continue;
        for (std::size_t a = 0; a < imdp.num_actions(); ++a)
            imdp.for_each_entry(s, a, [&](std::size_t t, double lo, double hi) { incoming[t] += hi - lo; });
    }
    std::vector<ScoreEntry> out;
    for (std::size_t q = 0; q < imdp.num_states(); ++q) {
        if (q == unsafe_state)
            continue;
        const double gap = std::max(0.0, p_upper.at(q) - p_lower.at(q));
        out.push_back({q, gap * incoming[q]});
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoreEntry& a, const ScoreEntry& b) { return a.score > b.score; });
    return out;
}

/// Largest relative edge expansion of the cell under every bounding matrix,
/// per dimension. An edge along dimension l has endpoints differing only in
/// l, so its expansion under M is |M e_l|; every edge along l expands alike.
inline Vector edge_expansion(const HyperRect& cell, const std::vector<LinearBounds>& bounds, SplitRule rule) {
    const Eigen::Index n = cell.dim();
    Vector xi = Vector::Zero(n);
    for (const auto& b : bounds) {
        for (const Matrix* m : {&b.A_lo, &b.A_hi}) {
            if (rule == SplitRule::edge_endpoints) {
                for (Eigen::Index l = 0; l < n; ++l)
                    xi(l) = std::max(xi(l), m->col(l).norm());
            } else {
                const double image = (*m * (cell.hi - cell.lo)).norm();
                for (Eigen::Index l = 0; l < n; ++l) {
                    const double w = cell.hi(l) - cell.lo(l);
                    if (w > 0.0)
                        xi(l) = std::max(xi(l), image / w);
                }
            }
        }
    }
    return xi;
}

/// Dimension of the maximally expanding edge; ties go to the lowest
/// dimension. Dimensions of zero width are skipped.
inline Eigen::Index split_dimension(const HyperRect& cell, const std::vector<LinearBounds>& bounds,
                                    SplitRule rule = SplitRule::edge_endpoints) {
    const Vector xi = edge_expansion(cell, bounds, rule);
    Eigen::Index best = -1;
    for (Eigen::Index l = 0; l < cell.dim(); ++l) {
        if (!(cell.hi(l) > cell.lo(l)))
            continue;
        if (best < 0 || xi(l) > xi(best))
            best = l;
    }
    if (best < 0)
        throw Error("refinement", "cannot split a cell of zero width in every dimension");
    return best;
}

struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::size_t> split_states;
    std::vector<Eigen::Index> dimensions;
    std::size_t recomputed_rows = 0;
};

/// One refinement round on `abs` given the synthesis result for its current
/// IMDP. Returns an empty record when no cell has a positive score.
inline RoundRecord refine_round(Abstraction& abs, const SynthesisResult& result, const RefinementConfig& config) {
    const auto scores =
        score_states(abs.imdp(), result.p_lower, result.p_upper, abs.grid().unsafe_id());
    const std::size_t budget = config.count_for(abs.grid().num_cells());
    std::vector<std::pair<std::size_t, Eigen::Index>> splits;
    RoundRecord rec;
    for (const auto& e : scores) {
        if (splits.size() >= budget || !(e.score > 0.0))
            break;
        std::vector<LinearBounds> bounds;
        for (std::size_t a = 0; a < abs.num_actions(); ++a)
            bounds.push_back(abs.post(e.state, a).bounds);
        const HyperRect& cell = abs.grid().cell(e.state);
        const Eigen::Index dim = split_dimension(cell, bounds, config.rule);
        const double mid = 0.5 * (cell.lo(dim) + cell.hi(dim));
        if (!(mid > cell.lo(dim) && mid < cell.hi(dim)))
            continue; // already at floating-point resolution
        splits.emplace_back(e.state, dim);
        rec.split_states.push_back(e.state);
        rec.dimensions.push_back(dim);
    }
    if (!splits.empty())
        rec.recomputed_rows = abs.split(splits);
    return rec;
}

/// Volume-weighted mean of p_upper - p_lower over the cells.
inline double mean_width(const RegionGrid& grid, const std::vector<double>& p_lower, const std::vector<double>& p_upper) {
    double num = 0.0, den = 0.0;
    for (std::size_t q = 0; q < grid.num_cells(); ++q) {
        const double v = grid.cell(q).volume();
        num += v * (p_upper.at(q) - p_lower.at(q));
        den += v;
    }
    return den > 0.0 ? num / den : 0.0;
}

inline double max_width(const RegionGrid& grid, const std::vector<double>& p_lower, const std::vector<double>& p_upper) {
    double m = 0.0;
    for (std::size_t q = 0; q < grid.num_cells(); ++q)
        m = std::max(m, p_upper.at(q) - p_lower.at(q));
    return m;
}

} // namespace nndm
