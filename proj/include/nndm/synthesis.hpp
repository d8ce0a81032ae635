#pragma once

// Maximin strategy synthesis on the IMDP x DFA product and the resulting
// per-region satisfaction intervals.

#include "nndm/automata.hpp"
#include "nndm/imdp.hpp"

#include <vector>

namespace nndm {

struct SynthesisResult {
    std::size_t dfa_states = 0;
    std::vector<std::size_t> strategy;     // per product state
    std::vector<double> product_lower;     // per product state
    std::vector<double> product_upper;     // per product state
    std::vector<double> p_lower;           // per base state, at its initial product state
    std::vector<double> p_upper;           // per base state, at its initial product state
    std::vector<std::size_t> action;       // per base state, at its initial product state
    std::size_t sweeps_maximin = 0;
    std::size_t sweeps_lower = 0;
    std::size_t sweeps_upper = 0;
    bool converged = true;
};

/// Robust VI for the maximin strategy, then evaluation of that fixed strategy
/// against the minimizing and maximizing adversaries.
inline SynthesisResult synthesize(const Imdp& imdp, const Dfa& dfa, std::size_t unsafe_state,
                                  const ValueIterationOptions& opts = {}) {
    const ProductImdp product(imdp, dfa, unsafe_state);
    const auto best = robust_value_iteration(product, product.accepting(), product.sink(), opts);
    const auto lower =
        evaluate_strategy(product, best.strategy, product.accepting(), product.sink(), AdversaryMode::minimize, opts);
    const auto upper =
        evaluate_strategy(product, best.strategy, product.accepting(), product.sink(), AdversaryMode::maximize, opts);

    SynthesisResult r;
    r.dfa_states = dfa.num_states();
    r.strategy = best.strategy;
    r.product_lower = lower.values;
    r.product_upper = upper.values;
    r.sweeps_maximin = best.sweeps;
    r.sweeps_lower = lower.sweeps;
    r.sweeps_upper = upper.sweeps;
    r.converged = best.converged && lower.converged && upper.converged;
    const std::size_t nq = imdp.num_states();
    r.p_lower.resize(nq);
    r.p_upper.resize(nq);
    r.action.resize(nq);
    for (std::size_t q = 0; q < nq; ++q) {
        const std::size_t s = product.initial_state(q);
        r.p_lower[q] = r.product_lower[s];
        // Both iterations stop within tolerance of their limits; keep the
        // reported interval ordered.
        r.p_upper[q] = std::max(r.product_upper[s], r.p_lower[q]);
        r.action[q] = r.strategy[s];
    }
    return r;
}

} // namespace nndm
