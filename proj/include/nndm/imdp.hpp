#pragma once

// Interval MDPs, the ordering-based adversary and robust value iteration.

#include "nndm/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace nndm {

struct BoundEntry {
    std::size_t target;
    double lower;
    double upper;

    bool operator==(const BoundEntry&) const = default;
};

/// Interval bounds of one (state, action) pair.
///
/// Targets whose upper bound fell below the pruning threshold are not listed;
/// `residual` is an upper bound on their total mass (their lower bounds are
/// zero). The adversary may place that mass on a virtual target that takes
/// the least favourable value for its objective, which keeps the row sound
/// for both lower and upper satisfaction bounds.
struct TransitionBoundRow {
    std::size_t source = 0;
    std::size_t action = 0;
    std::vector<BoundEntry> entries; // sorted by target
    double residual = 0.0;

    double sum_lower() const {
        double s = 0.0;
        for (const auto& e : entries)
            s += e.lower;
        return s;
    }

    double sum_upper() const {
        double s = residual;
        for (const auto& e : entries)
            s += e.upper;
        return s;
    }

    const BoundEntry* find(std::size_t target) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), target,
                                   [](const BoundEntry& e, std::size_t t) { return e.target < t; });
        return it != entries.end() && it->target == target ? &*it : nullptr;
    }

    double lower(std::size_t target) const {
        const BoundEntry* e = find(target);
        return e ? e->lower : 0.0;
    }

    double upper(std::size_t target) const {
        const BoundEntry* e = find(target);
        return e ? e->upper : 0.0;
    }

    /// Checks 0 <= lower <= upper <= 1 and sum(lower) <= 1 <= sum(upper).
    void validate(double tol = 1e-9) const {
        const std::string where = "row (" + std::to_string(source) + ", " + std::to_string(action) + ")";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (i > 0 && entries[i - 1].target >= e.target)
                throw Error("imdp_core", where + ": targets not strictly increasing");
            if (!(e.lower >= 0.0 && e.lower <= e.upper && e.upper <= 1.0))
                throw Error("imdp_core", where + ": invalid interval for target " + std::to_string(e.target));
        }
        if (residual < 0.0)
            throw Error("imdp_core", where + ": negative residual");
        if (sum_lower() > 1.0 + tol || sum_upper() < 1.0 - tol)
            throw Error("imdp_core", where + ": infeasible (sum lower " + std::to_string(sum_lower()) +
                                         ", sum upper " + std::to_string(sum_upper()) + ")");
    }

    bool operator==(const TransitionBoundRow&) const = default;
};

inline nlohmann::json row_to_json(const TransitionBoundRow& row, const std::string& action_name) {
    nlohmann::json lower = nlohmann::json::object();
    nlohmann::json upper = nlohmann::json::object();
    for (const auto& e : row.entries) {
        if (e.lower > 0.0)
            lower[std::to_string(e.target)] = e.lower;
        upper[std::to_string(e.target)] = e.upper;
    }
    nlohmann::json j = {{"source", row.source}, {"action", action_name}, {"lower", lower}, {"upper", upper}};
    if (row.residual > 0.0)
        j["residual"] = row.residual;
    return j;
}

/// IMDP with rows stored densely by (state, action).
class Imdp {
public:
    Imdp() = default;
    Imdp(std::size_t num_states, std::vector<std::string> action_names, std::vector<std::vector<std::string>> labels)
        : num_states_(num_states), action_names_(std::move(action_names)), labels_(std::move(labels)),
          rows_(num_states * action_names_.size()) {
        if (labels_.size() != num_states_)
            throw Error("imdp_core", "one label set per state required");
        for (std::size_t s = 0; s < num_states_; ++s)
            for (std::size_t a = 0; a < num_actions(); ++a) {
                rows_[s * num_actions() + a].source = s;
                rows_[s * num_actions() + a].action = a;
            }
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return action_names_.size(); }
    const std::vector<std::string>& action_names() const { return action_names_; }
    const std::vector<std::string>& label(std::size_t s) const { return labels_.at(s); }
    const std::vector<std::vector<std::string>>& labels() const { return labels_; }

    const TransitionBoundRow& row(std::size_t s, std::size_t a) const { return rows_.at(s * num_actions() + a); }
    TransitionBoundRow& row(std::size_t s, std::size_t a) { return rows_.at(s * num_actions() + a); }

    void set_row(TransitionBoundRow row) {
        const std::size_t s = row.source, a = row.action;
        rows_.at(s * num_actions() + a) = std::move(row);
    }

    double residual(std::size_t s, std::size_t a) const { return row(s, a).residual; }

    template <typename Fn>
    void for_each_entry(std::size_t s, std::size_t a, Fn&& fn) const {
        for (const auto& e : row(s, a).entries)
            fn(e.target, e.lower, e.upper);
    }

    /// Makes `s` absorbing under every action.
    void make_absorbing(std::size_t s) {
        for (std::size_t a = 0; a < num_actions(); ++a)
            row(s, a) = TransitionBoundRow{s, a, {{s, 1.0, 1.0}}, 0.0};
    }

    void validate() const {
        for (const auto& r : rows_) {
            r.validate();
            for (const auto& e : r.entries)
                if (e.target >= num_states_)
                    throw Error("imdp_core", "row targets unknown state " + std::to_string(e.target));
        }
    }

    bool operator==(const Imdp&) const = default;

private:
    std::size_t num_states_ = 0;
    std::vector<std::string> action_names_;
    std::vector<std::vector<std::string>> labels_;
    std::vector<TransitionBoundRow> rows_;
};

/// Anything robust value iteration can run on.
template <typename M>
concept IntervalModel = requires(const M& m, std::size_t s, std::size_t a) {
    { m.num_states() } -> std::convertible_to<std::size_t>;
    { m.num_actions() } -> std::convertible_to<std::size_t>;
    { m.residual(s, a) } -> std::convertible_to<double>;
    m.for_each_entry(s, a, [](std::size_t, double, double) {});
};

enum class AdversaryMode { minimize, maximize };

/// One target as seen by the adversary.
struct AdversaryItem {
    double value;
    double lower;
    double upper;
    std::size_t index;
};

/// Extreme expected value over { gamma : lower <= gamma <= upper, sum gamma = 1 }.
/// Ordering method: start from the lower bounds and hand the free mass to the
/// targets in order of value (ascending to minimize, descending to maximize),
/// each up to its upper bound. Ties go to the lower index. `items` is
/// reordered; `assigned`, when given, receives the optimal distribution
/// aligned with the reordered items.
inline double adversary_extreme(std::vector<AdversaryItem>& items, AdversaryMode mode,
                                std::vector<double>* assigned = nullptr) {
    if (mode == AdversaryMode::minimize)
        std::sort(items.begin(), items.end(), [](const AdversaryItem& x, const AdversaryItem& y) {
            return x.value < y.value || (x.value == y.value && x.index < y.index);
        });
    else
        std::sort(items.begin(), items.end(), [](const AdversaryItem& x, const AdversaryItem& y) {
            return x.value > y.value || (x.value == y.value && x.index < y.index);
        });
    double budget = 1.0;
    double result = 0.0;
    for (const auto& it : items) {
        budget -= it.lower;
        result += it.lower * it.value;
    }
    if (budget < -1e-9)
        throw Error("imdp_core", "infeasible row: lower bounds sum above one");
    if (assigned)
        assigned->assign(items.size(), 0.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        const double add = budget > 0.0 ? std::min(it.upper - it.lower, budget) : 0.0;
        result += add * it.value;
        budget -= add;
        if (assigned)
            (*assigned)[i] = it.lower + add;
    }
    if (budget > 1e-9)
        throw Error("imdp_core", "infeasible row: upper bounds sum below one");
    return result;
}

/// Same optimum as adversary_extreme without the distribution, in expected
/// linear time: instead of sorting, repeatedly partition around a pivot
/// value and pour the free mass into the favourable side first.
inline double adversary_value(std::vector<AdversaryItem>& items, AdversaryMode mode) {
    const double sign = mode == AdversaryMode::minimize ? 1.0 : -1.0;
    double budget = 1.0;
    double result = 0.0;
    for (const auto& it : items) {
        budget -= it.lower;
        result += it.lower * it.value;
    }
    if (budget < -1e-9)
        throw Error("imdp_core", "infeasible row: lower bounds sum above one");
    std::size_t begin = 0, end = items.size();
    while (budget > 0.0 && begin < end) {
        // Median of three keys as pivot.
        const double a = sign * items[begin].value, b = sign * items[begin + (end - begin) / 2].value,
                     c = sign * items[end - 1].value;
        const double pivot = std::max(std::min(a, b), std::min(std::max(a, b), c));
        // Three-way partition: [begin, lt) < pivot, [lt, gt) == pivot, [gt, end) > pivot.
        std::size_t lt = begin, i = begin, gt = end;
        while (i < gt) {
            const double k = sign * items[i].value;
            if (k < pivot)
                std::swap(items[lt++], items[i++]);
            else if (k > pivot)
                std::swap(items[i], items[--gt]);
            else
                ++i;
        }
        double cap_less = 0.0;
        for (std::size_t j = begin; j < lt; ++j)
            cap_less += items[j].upper - items[j].lower;
        if (cap_less >= budget) {
            end = lt;
            continue;
        }
        for (std::size_t j = begin; j < lt; ++j)
            result += (items[j].upper - items[j].lower) * items[j].value;
        budget -= cap_less;
        double cap_eq = 0.0;
        for (std::size_t j = lt; j < gt; ++j)
            cap_eq += items[j].upper - items[j].lower;
        const double take = std::min(cap_eq, budget);
        result += take * sign * pivot;
        budget -= take;
        begin = gt;
    }
    if (budget > 1e-9)
        throw Error("imdp_core", "infeasible row: upper bounds sum below one");
    return result;
}

constexpr std::size_t residual_index = std::numeric_limits<std::size_t>::max();

namespace detail {

template <IntervalModel M>
void collect_items(const M& model, std::size_t s, std::size_t a, const std::vector<double>& values,
                   AdversaryMode mode, std::vector<AdversaryItem>& items) {
    items.clear();
    model.for_each_entry(s, a, [&](std::size_t t, double lo, double hi) { items.push_back({values[t], lo, hi, t}); });
    const double r = model.residual(s, a);
    if (r > 0.0)
        items.push_back({mode == AdversaryMode::minimize ? 0.0 : 1.0, 0.0, r, residual_index});
}

} // namespace detail

/// adversary_extreme on a row of a model.
template <IntervalModel M>
double adversary_extreme(const M& model, std::size_t s, std::size_t a, const std::vector<double>& values,
                         AdversaryMode mode) {
    std::vector<AdversaryItem> items;
    detail::collect_items(model, s, a, values, mode, items);
    return adversary_value(items, mode);
}

struct ValueIterationOptions {
    double tolerance = 1e-6;
    std::size_t max_sweeps = 5000;
    int threads = 1;
};

struct ValueIterationResult {
    std::vector<double> values;
    std::vector<std::size_t> strategy; // one action per state
    std::size_t sweeps = 0;
    bool converged = false; // false: values are horizon-bounded (still lower bounds)
};

namespace detail {

inline std::vector<double> initial_values(const std::vector<char>& accepting, const std::vector<char>& sink) {
    std::vector<double> v(accepting.size(), 0.0);
    for (std::size_t s = 0; s < v.size(); ++s) {
        if (accepting[s] && sink[s])
            throw Error("imdp_core", "state " + std::to_string(s) + " is both accepting and sink");
        v[s] = accepting[s] ? 1.0 : 0.0;
    }
    return v;
}

} // namespace detail

/// Maximin reachability: V(s) = max_a min_gamma sum gamma V, from V_0 = 1_accepting.
///
/// Jacobi sweeps (each state reads the previous iterate). A state keeps its
/// current action unless another action is strictly better, which prevents
/// the extracted strategy from stalling in value-preserving loops; when it
/// switches, the lowest-index maximizer wins.
template <IntervalModel M>
ValueIterationResult robust_value_iteration(const M& model, const std::vector<char>& accepting,
                                            const std::vector<char>& sink, const ValueIterationOptions& opts = {}) {
    const std::size_t ns = model.num_states();
    const std::size_t na = model.num_actions();
    if (accepting.size() != ns || sink.size() != ns)
        throw Error("imdp_core", "accepting/sink vectors must cover every state");
    ValueIterationResult res;
    res.values = detail::initial_values(accepting, sink);
    res.strategy.assign(ns, 0);
    std::vector<double> next = res.values;
    const int threads = std::max(1, opts.threads);
    std::vector<std::vector<AdversaryItem>> scratch(static_cast<std::size_t>(threads));
    std::vector<double> delta(ns, 0.0);

    for (res.sweeps = 0; res.sweeps < opts.max_sweeps;) {
        ++res.sweeps;
        const std::size_t chunk = (ns + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
        parallel_for(static_cast<std::size_t>(threads), threads, [&](std::size_t w) {
            auto& items = scratch[w];
            const std::size_t end = std::min(ns, (w + 1) * chunk);
            for (std::size_t s = w * chunk; s < end; ++s) {
                if (accepting[s] || sink[s]) {
                    next[s] = res.values[s];
                    delta[s] = 0.0;
                    continue;
                }
                double best = -1.0;
                std::size_t best_a = 0;
                double current = -1.0;
                for (std::size_t a = 0; a < na; ++a) {
                    detail::collect_items(model, s, a, res.values, AdversaryMode::minimize, items);
                    const double q = adversary_value(items, AdversaryMode::minimize);
                    if (q > best) {
                        best = q;
                        best_a = a;
                    }
                    if (a == res.strategy[s])
                        current = q;
                }
                if (best > current)
                    res.strategy[s] = best_a;
                // Values never decrease from V_0; clamp away rounding noise.
                next[s] = std::clamp(std::max(best, res.values[s]), 0.0, 1.0);
                delta[s] = next[s] - res.values[s];
            }
        });
        res.values.swap(next);
        const double residual = ns ? *std::max_element(delta.begin(), delta.end()) : 0.0;
        if (residual < opts.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

/// Satisfaction probability of a fixed strategy under the worst (minimize) or
/// best (maximize) adversary.
template <IntervalModel M>
ValueIterationResult evaluate_strategy(const M& model, const std::vector<std::size_t>& strategy,
                                       const std::vector<char>& accepting, const std::vector<char>& sink,
                                       AdversaryMode mode, const ValueIterationOptions& opts = {}) {
    const std::size_t ns = model.num_states();
    if (accepting.size() != ns || sink.size() != ns || strategy.size() != ns)
        throw Error("imdp_core", "accepting/sink/strategy vectors must cover every state");
    ValueIterationResult res;
    res.values = detail::initial_values(accepting, sink);
    res.strategy = strategy;
    std::vector<double> next = res.values;
    const int threads = std::max(1, opts.threads);
    std::vector<std::vector<AdversaryItem>> scratch(static_cast<std::size_t>(threads));
    std::vector<double> delta(ns, 0.0);

    for (res.sweeps = 0; res.sweeps < opts.max_sweeps;) {
        ++res.sweeps;
        const std::size_t chunk = (ns + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
        parallel_for(static_cast<std::size_t>(threads), threads, [&](std::size_t w) {
            auto& items = scratch[w];
            const std::size_t end = std::min(ns, (w + 1) * chunk);
            for (std::size_t s = w * chunk; s < end; ++s) {
                if (accepting[s] || sink[s]) {
                    next[s] = res.values[s];
                    delta[s] = 0.0;
                    continue;
                }
                detail::collect_items(model, s, strategy[s], res.values, mode, items);
                const double q = adversary_value(items, mode);
                next[s] = std::clamp(std::max(q, res.values[s]), 0.0, 1.0);
                delta[s] = next[s] - res.values[s];
            }
        });
        res.values.swap(next);
        const double residual = ns ? *std::max_element(delta.begin(), delta.end()) : 0.0;
        if (residual < opts.tolerance) {
            res.converged = true;
            break;
        }
    }
    return res;
}

template <IntervalModel M>
ValueIterationResult evaluate_strategy_upper(const M& model, const std::vector<std::size_t>& strategy,
                                             const std::vector<char>& accepting, const std::vector<char>& sink,
                                             const ValueIterationOptions& opts = {}) {
    return evaluate_strategy(model, strategy, accepting, sink, AdversaryMode::maximize, opts);
}

} // namespace nndm
