#pragma once

// Deterministic finite automata over proposition sets, the built-in
// reach-avoid templates, and the IMDP x DFA product.

#include "nndm/geometry.hpp"
#include "nndm/imdp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace nndm {

/// DFA whose letters are label sets (subsets of `ap`). A state has explicit
/// edges keyed by exact label sets and an optional default edge.
class Dfa {
public:
    Dfa() = default;

    Dfa(std::vector<std::string> states, std::size_t initial, std::vector<std::size_t> accepting,
        std::vector<std::string> ap)
        : states_(std::move(states)), initial_(initial), accepting_(states_.size(), 0),
          ap_(make_label_set(std::move(ap))), edges_(states_.size()), defaults_(states_.size()) {
        if (states_.empty())
            throw Error("spec_automata", "automaton has no states");
        if (std::find(ap_.begin(), ap_.end(), unsafe_label) != ap_.end())
            throw Error("spec_automata", "'" + unsafe_label + "' is reserved and cannot be a proposition");
        if (initial_ >= states_.size())
            throw Error("spec_automata", "initial state out of range");
        for (std::size_t s : accepting) {
            if (s >= states_.size())
                throw Error("spec_automata", "accepting state out of range");
            accepting_[s] = 1;
        }
    }

    std::size_t num_states() const { return states_.size(); }
    std::size_t initial() const { return initial_; }
    const std::vector<std::string>& state_names() const { return states_; }
    const std::string& state_name(std::size_t d) const { return states_.at(d); }
    const std::vector<std::string>& ap() const { return ap_; }
    bool accepting(std::size_t d) const { return accepting_.at(d) != 0; }

    std::size_t state_index(const std::string& name) const {
        auto it = std::find(states_.begin(), states_.end(), name);
        if (it == states_.end())
            throw Error("spec_automata", "unknown automaton state '" + name + "'");
        return static_cast<std::size_t>(it - states_.begin());
    }

    void add_edge(std::size_t from, LabelSet when, std::size_t to) {
        when = make_label_set(std::move(when));
        for (const auto& p : when)
            if (!std::binary_search(ap_.begin(), ap_.end(), p))
                throw Error("spec_automata", "unknown proposition '" + p + "'");
        if (to >= states_.size())
            throw Error("spec_automata", "edge target out of range");
        edges_.at(from)[std::move(when)] = to;
    }

    void set_default(std::size_t from, std::size_t to) {
        if (to >= states_.size())
            throw Error("spec_automata", "edge target out of range");
        defaults_.at(from) = to;
    }

    /// Successor on an observed label set. Propositions outside `ap` are not
    /// observable by the automaton and are ignored.
    std::size_t step(std::size_t d, const LabelSet& label) const {
        LabelSet visible;
        for (const auto& p : label)
            if (std::binary_search(ap_.begin(), ap_.end(), p))
                visible.push_back(p);
        const auto& e = edges_.at(d);
        if (auto it = e.find(visible); it != e.end())
            return it->second;
        if (defaults_[d])
            return *defaults_[d];
        throw Error("spec_automata", "no transition from '" + states_[d] + "' on {" + join_labels(visible, ",") + "}");
    }

    std::size_t run(const std::vector<LabelSet>& trace, std::size_t from) const {
        for (const auto& l : trace)
            from = step(from, l);
        return from;
    }

    /// Throws unless every state has a successor for every subset of `ap`.
    void check_total() const {
        if (ap_.size() > 20)
            throw Error("spec_automata", "too many propositions");
        for (std::size_t d = 0; d < states_.size(); ++d) {
            if (defaults_[d])
                continue;
            for (const LabelSet& s : all_subsets())
                if (!edges_[d].count(s))
                    throw Error("spec_automata", "missing transition from '" + states_[d] + "' on {" +
                                                     join_labels(s, ",") + "}");
        }
    }

    /// Every subset of `ap`, each sorted.
    std::vector<LabelSet> all_subsets() const {
        std::vector<LabelSet> out;
        for (std::uint64_t m = 0; m < (std::uint64_t{1} << ap_.size()); ++m) {
            LabelSet s;
            for (std::size_t i = 0; i < ap_.size(); ++i)
                if (m >> i & 1U)
                    s.push_back(ap_[i]);
            out.push_back(std::move(s));
        }
        return out;
    }

    /// States from which no accepting state is reachable.
    std::vector<char> dead_states() const {
        const std::size_t n = states_.size();
        std::vector<std::vector<std::size_t>> reverse(n);
        for (std::size_t d = 0; d < n; ++d) {
            for (const auto& [label, to] : edges_[d])
                reverse[to].push_back(d);
            if (defaults_[d])
                reverse[*defaults_[d]].push_back(d);
        }
        std::vector<char> alive(n, 0);
        std::queue<std::size_t> work;
        for (std::size_t d = 0; d < n; ++d)
            if (accepting_[d]) {
                alive[d] = 1;
                work.push(d);
            }
        while (!work.empty()) {
            const std::size_t d = work.front();
            work.pop();
            for (std::size_t p : reverse[d])
                if (!alive[p]) {
                    alive[p] = 1;
                    work.push(p);
                }
        }
        std::vector<char> dead(n);
        for (std::size_t d = 0; d < n; ++d)
            dead[d] = !alive[d];
        return dead;
    }

    /// Full transition table over all subsets of `ap`, for comparisons.
    std::vector<std::vector<std::size_t>> table() const {
        const auto subsets = all_subsets();
        std::vector<std::vector<std::size_t>> t(states_.size());
        for (std::size_t d = 0; d < states_.size(); ++d)
            for (const auto& s : subsets)
                t[d].push_back(step(d, s));
        return t;
    }

    const std::map<LabelSet, std::size_t>& edges(std::size_t d) const { return edges_.at(d); }
    const std::optional<std::size_t>& default_edge(std::size_t d) const { return defaults_.at(d); }

private:
    std::vector<std::string> states_;
    std::size_t initial_ = 0;
    std::vector<char> accepting_;
    std::vector<std::string> ap_;
    std::vector<std::map<LabelSet, std::size_t>> edges_;
    std::vector<std::optional<std::size_t>> defaults_;
};

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

namespace detail {

inline std::string role(const std::map<std::string, std::string>& labels, const std::string& key) {
    auto it = labels.find(key);
    if (it == labels.end())
        throw Error("spec_automata", "template needs a proposition for '" + key + "'");
    return it->second;
}

inline bool has(const LabelSet& s, const std::string& p) { return std::binary_search(s.begin(), s.end(), p); }

} // namespace detail

/// G(!O) & F(D): states trying, accepted, dead.
inline Dfa reach_avoid_dfa(const std::string& obstacle, const std::string& goal) {
    Dfa dfa({"trying", "accepted", "dead"}, 0, {1}, {obstacle, goal});
    for (const LabelSet& s : dfa.all_subsets()) {
        if (detail::has(s, obstacle))
            dfa.add_edge(0, s, 2);
        else if (detail::has(s, goal))
            dfa.add_edge(0, s, 1);
    }
    dfa.set_default(0, 0);
    dfa.set_default(1, 1);
    dfa.set_default(2, 2);
    return dfa;
}

/// G(!O) & F(D1) & F(D2): tracks which goals have been seen.
inline Dfa reach_two_avoid_dfa(const std::string& obstacle, const std::string& goal1, const std::string& goal2) {
    // none, seen1, seen2, accepted, dead
    Dfa dfa({"none", "seen1", "seen2", "accepted", "dead"}, 0, {3}, {obstacle, goal1, goal2});
    for (const LabelSet& s : dfa.all_subsets()) {
        for (std::size_t d = 0; d < 3; ++d) {
            std::size_t to;
            if (detail::has(s, obstacle)) {
                to = 4;
            } else {
                const bool one = d == 1 || detail::has(s, goal1);
                const bool two = d == 2 || detail::has(s, goal2);
                to = one && two ? 3 : one ? 1 : two ? 2 : 0;
            }
            if (to != d)
                dfa.add_edge(d, s, to);
        }
    }
    for (std::size_t d = 0; d < 5; ++d)
        dfa.set_default(d, d);
    return dfa;
}

/// Template by name. `labels` maps roles ("O", "D" or "O", "D1", "D2") to
/// propositions; roles missing from the map default to their own name.
inline Dfa dfa_template(const std::string& name, std::map<std::string, std::string> labels = {}) {
    auto fill = [&](const std::string& key) { labels.emplace(key, key); };
    if (name == "reach_avoid") {
        fill("O");
        fill("D");
        return reach_avoid_dfa(detail::role(labels, "O"), detail::role(labels, "D"));
    }
    if (name == "reach_two_avoid") {
        fill("O");
        fill("D1");
        fill("D2");
        return reach_two_avoid_dfa(detail::role(labels, "O"), detail::role(labels, "D1"), detail::role(labels, "D2"));
    }
    throw Error("spec_automata", "unknown template '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline Dfa dfa_from_json(const nlohmann::json& j) {
    try {
        const auto names = j.at("states").get<std::vector<std::string>>();
        std::vector<std::string> ap = j.value("ap", std::vector<std::string>{});
        auto index = [&](const std::string& s) {
            auto it = std::find(names.begin(), names.end(), s);
            if (it == names.end())
                throw Error("spec_automata", "unknown automaton state '" + s + "'");
            return static_cast<std::size_t>(it - names.begin());
        };
        std::vector<std::size_t> acc;
        for (const auto& s : j.at("accepting"))
            acc.push_back(index(s.get<std::string>()));
        Dfa dfa(names, index(j.at("initial").get<std::string>()), acc, ap);
        for (const auto& t : j.at("transitions")) {
            const std::size_t from = index(t.at("from").get<std::string>());
            if (t.contains("default"))
                dfa.set_default(from, index(t.at("default").get<std::string>()));
            else
                dfa.add_edge(from, t.at("when").get<std::vector<std::string>>(), index(t.at("to").get<std::string>()));
        }
        dfa.check_total();
        return dfa;
    } catch (const nlohmann::json::exception& e) {
        throw Error("spec_automata", std::string("malformed automaton: ") + e.what());
    }
}

inline nlohmann::json dfa_to_json(const Dfa& dfa) {
    nlohmann::json acc = nlohmann::json::array();
    for (std::size_t d = 0; d < dfa.num_states(); ++d)
        if (dfa.accepting(d))
            acc.push_back(dfa.state_name(d));
    nlohmann::json trans = nlohmann::json::array();
    for (std::size_t d = 0; d < dfa.num_states(); ++d) {
        for (const auto& [when, to] : dfa.edges(d))
            trans.push_back({{"from", dfa.state_name(d)}, {"when", when}, {"to", dfa.state_name(to)}});
        if (dfa.default_edge(d))
            trans.push_back({{"from", dfa.state_name(d)}, {"default", dfa.state_name(*dfa.default_edge(d))}});
    }
    return {{"states", dfa.state_names()},
            {"initial", dfa.state_name(dfa.initial())},
            {"accepting", acc},
            {"ap", dfa.ap()},
            {"transitions", trans}};
}

inline Dfa load_dfa(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("spec_automata", "cannot open automaton file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("spec_automata", "cannot parse '" + path + "': " + e.what());
    }
    return dfa_from_json(j);
}

// ---------------------------------------------------------------------------
// Product
// ---------------------------------------------------------------------------

/// IMDP x DFA product, viewed without copying rows. Product state (q, d) has
/// index q * |D| + d. Moving to a base state t advances the automaton on
/// L(t); moving into the unsafe state keeps d, and every (q_u, d) with d
/// non-accepting is a sink. Accepting product states are terminal.
class ProductImdp {
public:
    ProductImdp(const Imdp& base, const Dfa& dfa, std::size_t unsafe_state)
        : base_(&base), dfa_(&dfa), nd_(dfa.num_states()), unsafe_(unsafe_state) {
        if (unsafe_ >= base.num_states())
            throw Error("spec_automata", "unsafe state out of range");
        const auto& ap = dfa.ap();
        next_.resize(base.num_states() * nd_);
        for (std::size_t t = 0; t < base.num_states(); ++t) {
            if (t != unsafe_)
                for (const auto& p : base.label(t))
                    if (!std::binary_search(ap.begin(), ap.end(), p))
                        throw Error("spec_automata", "state " + std::to_string(t) + " carries proposition '" + p +
                                                         "' outside the automaton alphabet");
            for (std::size_t d = 0; d < nd_; ++d)
                next_[t * nd_ + d] = t == unsafe_ ? d : dfa.step(d, base.label(t));
        }
        const auto dead = dfa.dead_states();
        accepting_.assign(num_states(), 0);
        sink_.assign(num_states(), 0);
        for (std::size_t q = 0; q < base.num_states(); ++q)
            for (std::size_t d = 0; d < nd_; ++d) {
                const std::size_t s = q * nd_ + d;
                accepting_[s] = dfa.accepting(d);
                sink_[s] = !accepting_[s] && (dead[d] || q == unsafe_);
            }
    }

    std::size_t num_states() const { return base_->num_states() * nd_; }
    std::size_t num_actions() const { return base_->num_actions(); }
    std::size_t dfa_states() const { return nd_; }
    const Imdp& base() const { return *base_; }
    const Dfa& dfa() const { return *dfa_; }

    std::size_t index(std::size_t q, std::size_t d) const { return q * nd_ + d; }
    std::size_t base_state(std::size_t s) const { return s / nd_; }
    std::size_t dfa_state(std::size_t s) const { return s % nd_; }

    /// Product state in which a path starting in q begins: the automaton has
    /// already read L(q).
    std::size_t initial_state(std::size_t q) const {
        if (q == unsafe_)
            return index(q, dfa_->initial());
        return index(q, dfa_->step(dfa_->initial(), base_->label(q)));
    }

    double residual(std::size_t s, std::size_t a) const { return base_->residual(base_state(s), a); }

    template <typename Fn>
    void for_each_entry(std::size_t s, std::size_t a, Fn&& fn) const {
        const std::size_t d = dfa_state(s);
        base_->for_each_entry(base_state(s), a, [&](std::size_t t, double lo, double hi) {
            fn(t * nd_ + next_[t * nd_ + d], lo, hi);
        });
    }

    /// Materialized product row (for inspection and tests).
    TransitionBoundRow lifted_row(std::size_t s, std::size_t a) const {
        TransitionBoundRow row{s, a, {}, residual(s, a)};
        for_each_entry(s, a, [&](std::size_t t, double lo, double hi) { row.entries.push_back({t, lo, hi}); });
        return row;
    }

    const std::vector<char>& accepting() const { return accepting_; }
    const std::vector<char>& sink() const { return sink_; }

private:
    const Imdp* base_;
    const Dfa* dfa_;
    std::size_t nd_;
    std::size_t unsafe_;
    std::vector<std::size_t> next_;
    std::vector<char> accepting_;
    std::vector<char> sink_;
};

} // namespace nndm
