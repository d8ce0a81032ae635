#pragma once

// IMDP abstraction of an NNDM over a RegionGrid, with per-(cell, action)
// caches so that refinement recomputes only the rows it invalidates.

#include "nndm/geometry.hpp"
#include "nndm/imdp.hpp"
#include "nndm/linear_relaxation.hpp"
#include "nndm/nn_model.hpp"
#include "nndm/transition_bounds.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace nndm {

struct AbstractionOptions {
    RowOptions row;
    int threads = 1;
};

class Abstraction {
public:
    Abstraction(const NeuralDynamics& nd, RegionGrid grid, AbstractionOptions opts = {})
        : nd_(&nd), grid_(std::move(grid)), opts_(opts) {
        if (nd.dim() != grid_.dim())
            throw Error("geometry", "network and grid dimensions differ");
        rebuild();
    }

    const NeuralDynamics& dynamics() const { return *nd_; }
    const RegionGrid& grid() const { return grid_; }
    const Imdp& imdp() const { return imdp_; }
    std::size_t num_actions() const { return nd_->num_actions(); }
    const AbstractionOptions& options() const { return opts_; }

    const PostImage& post(std::size_t cell, std::size_t action) const {
        return posts_.at(cell * num_actions() + action);
    }
    const RawRow& raw_row(std::size_t cell, std::size_t action) const {
        return raw_.at(cell * num_actions() + action);
    }

    /// Recomputes every relaxation and row from scratch.
    void rebuild() {
        const std::size_t na = num_actions(), nc = grid_.num_cells();
        posts_.assign(nc * na, PostImage{});
        raw_.assign(nc * na, RawRow{});
        std::vector<std::size_t> all(nc * na);
        for (std::size_t i = 0; i < all.size(); ++i)
            all[i] = i;
        recompute_posts(all);
        recompute_rows(all);
        assemble();
    }

    /// Splits each (cell, dim) at its midpoint and updates the abstraction.
    /// Rows of split cells and of cells whose post-image rect hull touches a
    /// split cell are recomputed; every other row is patched in place, which
    /// yields exactly the rows a full rebuild would produce. Returns the number
    /// of recomputed (cell, action) rows.
    std::size_t split(const std::vector<std::pair<std::size_t, Eigen::Index>>& splits) {
        const std::size_t na = num_actions();
        const std::size_t old_cells = grid_.num_cells();
        const std::size_t old_unsafe = grid_.unsafe_id();

        std::vector<HyperRect> parents;
        std::vector<std::pair<std::size_t, std::size_t>> children; // (lower keeps id, upper appended)
        std::vector<char> split_mark(old_cells, 0);
        for (const auto& [cell, dim] : splits) {
            if (cell >= old_cells || split_mark[cell])
                throw Error("refinement", "invalid or repeated split of cell " + std::to_string(cell));
            split_mark[cell] = 1;
            parents.push_back(grid_.cell(cell));
            children.emplace_back(cell, grid_.split(cell, dim));
        }
        grid_.rebuild_locator();
        const std::size_t new_cells = grid_.num_cells();
        const std::size_t new_unsafe = grid_.unsafe_id();

        posts_.resize(new_cells * na);
        raw_.resize(new_cells * na);

        std::vector<char> dirty(new_cells * na, 0);
        for (std::size_t c = 0; c < new_cells; ++c) {
            const bool fresh = c >= old_cells || split_mark[c];
            for (std::size_t a = 0; a < na; ++a) {
                if (fresh) {
                    dirty[c * na + a] = 1;
                    continue;
                }
                const HyperRect& hull = posts_[c * na + a].rect;
                for (const auto& p : parents)
                    if (p.intersects(hull)) {
                        dirty[c * na + a] = 1;
                        break;
                    }
            }
        }
        std::vector<std::size_t> fresh_posts, dirty_rows, clean_rows;
        for (std::size_t i = 0; i < dirty.size(); ++i) {
            const std::size_t c = i / na;
            if (c >= old_cells || split_mark[c])
                fresh_posts.push_back(i);
            (dirty[i] ? dirty_rows : clean_rows).push_back(i);
        }
        recompute_posts(fresh_posts);
        recompute_rows(dirty_rows);
        parallel_for(clean_rows.size(), opts_.threads, [&](std::size_t k) {
            patch_row(clean_rows[k], children, old_unsafe, new_unsafe);
        });
        assemble();
        return dirty_rows.size();
    }

private:
    void recompute_posts(const std::vector<std::size_t>& ids) {
        const std::size_t na = num_actions();
        parallel_for(ids.size(), opts_.threads, [&](std::size_t k) {
            const std::size_t i = ids[k];
            const HyperRect& cell = grid_.cell(i / na);
            posts_[i] = make_post_image(relax(*nd_, i % na, grid_.transform(), cell), cell);
        });
    }

    void recompute_rows(const std::vector<std::size_t>& ids) {
        parallel_for(ids.size(), opts_.threads,
                     [&](std::size_t k) { raw_[ids[k]] = compute_raw_row(grid_, posts_[ids[k]], opts_.row); });
    }

    // Row whose hull rect is disjoint from every split parent: each parent is
    // replaced by its two children (both still disjoint from the hull, so
    // their bounds come from the rect-hull points), and q_u moves to its new id.
    void patch_row(std::size_t i, const std::vector<std::pair<std::size_t, std::size_t>>& children,
                   std::size_t old_unsafe, std::size_t new_unsafe) {
        RawRow& raw = raw_[i];
        const PostImage& post = posts_[i];
        std::vector<BoundEntry> kept;
        kept.reserve(raw.entries.size() + children.size());
        std::vector<char> parent(old_unsafe, 0);
        for (const auto& ch : children)
            parent[ch.first] = 1;
        for (const auto& e : raw.entries) {
            if (e.target == old_unsafe)
                kept.push_back({new_unsafe, e.lower, e.upper});
            else if (!parent[e.target])
                kept.push_back(e);
        }
        std::size_t pruned = raw.pruned;
        // Parents that were pruned leave the pruned count; re-add per child.
        for (const auto& ch : children)
            if (!raw_entry_present(raw, ch.first))
                --pruned;
        for (const auto& ch : children)
            for (std::size_t t : {ch.first, ch.second}) {
                const KernelTarget target(grid_.cell(t));
                const ExtremePoints z = rect_extreme_points(post.rect, target);
                if (auto e = detail::make_entry(t, detail::bound_for_target(post, target, z, false), opts_.row))
                    kept.push_back(*e);
                else
                    ++pruned;
            }
        std::sort(kept.begin(), kept.end(), [](const BoundEntry& a, const BoundEntry& b) { return a.target < b.target; });
        raw.entries = std::move(kept);
        raw.pruned = pruned;
    }

    static bool raw_entry_present(const RawRow& raw, std::size_t target) {
        return std::binary_search(raw.entries.begin(), raw.entries.end(), BoundEntry{target, 0.0, 0.0},
                                  [](const BoundEntry& a, const BoundEntry& b) { return a.target < b.target; });
    }

    void assemble() {
        const std::size_t na = num_actions(), nc = grid_.num_cells();
        std::vector<LabelSet> labels = grid_.cell_labels();
        labels.push_back({unsafe_label});
        Imdp m(nc + 1, nd_->actions(), std::move(labels));
        std::vector<TransitionBoundRow> rows(nc * na);
        parallel_for(rows.size(), opts_.threads, [&](std::size_t i) {
            rows[i] = finalize_row(i / na, i % na, raw_[i], grid_.unsafe_id(), opts_.row);
        });
        for (auto& r : rows)
            m.set_row(std::move(r));
        m.make_absorbing(grid_.unsafe_id());
        imdp_ = std::move(m);
    }

    const NeuralDynamics* nd_;
    RegionGrid grid_;
    AbstractionOptions opts_;
    std::vector<PostImage> posts_;
    std::vector<RawRow> raw_;
    Imdp imdp_;
};

} // namespace nndm
