#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "famtree/mdp.hpp"
#include "famtree/quotient.hpp"

namespace famtree {

enum class Direction { Max, Min };

/// Comparison slack for threshold tests `value >= lambda`; value iteration
/// approaches fixed points from below, so exact-boundary instances would
/// otherwise flip on rounding.
inline constexpr double kThresholdSlack = 1e-6;

inline bool meets_threshold(double value, double lambda) {
    return value >= lambda - kThresholdSlack;
}

struct SolveOptions {
    double tolerance = 1e-10;
    std::size_t maxSweeps = 1'000'000;
};

struct SolveResult {
    double value = 0.0;                 // value at the initial state
    std::vector<double> values;         // per state
    Policy policy;                      // one choice index per state
    std::size_t iterations = 0;         // value-iteration sweeps
    bool monotone = true;               // iterates never decreased
};

/// Flattened float model consumed by the solvers. Choices are whatever the
/// caller materialized (actions, quotient (action, class) pairs, game moves).
struct NumericChoice {
    std::vector<std::pair<std::uint32_t, double>> row;
};

struct NumericMdp {
    std::uint32_t initial = 0;
    std::vector<std::vector<NumericChoice>> choices;
    StateMask targets;

    std::size_t state_count() const { return choices.size(); }
};

/// Two-player view: maximizer owns the states not marked in `minimizer`.
struct NumericGame {
    NumericMdp mdp;
    StateMask minimizer;
};

namespace detail {

inline StateMask backward_reachable(const NumericMdp& m, const StateMask& from) {
    std::vector<std::vector<std::uint32_t>> pred(m.state_count());
    for (std::size_t s = 0; s < m.state_count(); ++s)
        for (const auto& c : m.choices[s])
            for (const auto& [t, p] : c.row)
                if (p > 0.0) pred[t].push_back(static_cast<std::uint32_t>(s));
    StateMask seen(m.state_count(), 0);
    std::deque<std::uint32_t> queue;
    for (std::size_t s = 0; s < m.state_count(); ++s)
        if (from[s]) { seen[s] = 1; queue.push_back(static_cast<std::uint32_t>(s)); }
    while (!queue.empty()) {
        std::uint32_t s = queue.front();
        queue.pop_front();
        for (auto p : pred[s])
            if (!seen[p]) { seen[p] = 1; queue.push_back(p); }
    }
    return seen;
}

/// States with maximal reachability 0: no path to the targets at all.
inline StateMask prob0_max(const NumericMdp& m) {
    StateMask canReach = backward_reachable(m, m.targets);
    StateMask zero(m.state_count(), 0);
    for (std::size_t s = 0; s < m.state_count(); ++s) zero[s] = canReach[s] ? 0 : 1;
    return zero;
}

/// States with minimal reachability 0, with a witness choice per such state
/// whose successors stay inside the zero region.
inline StateMask prob0_min(const NumericMdp& m, std::vector<std::uint32_t>* witness) {
    StateMask in(m.state_count(), 0);
    for (std::size_t s = 0; s < m.state_count(); ++s) in[s] = m.targets[s] ? 0 : 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t s = 0; s < m.state_count(); ++s) {
            if (!in[s]) continue;
            bool hasConfining = false;
            for (const auto& c : m.choices[s]) {
                bool confined = true;
                for (const auto& [t, p] : c.row)
                    if (p > 0.0 && !in[t]) { confined = false; break; }
                if (confined) { hasConfining = true; break; }
            }
            if (!hasConfining) { in[s] = 0; changed = true; }
        }
    }
    if (witness) {
        witness->assign(m.state_count(), 0);
        for (std::size_t s = 0; s < m.state_count(); ++s) {
            if (!in[s]) continue;
            for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
                bool confined = true;
                for (const auto& [t, p] : m.choices[s][k].row)
                    if (p > 0.0 && !in[t]) { confined = false; break; }
                if (confined) { (*witness)[s] = k; break; }
            }
        }
    }
    return in;
}

/// Game states where the maximizer cannot force positive reachability,
/// with confining witness choices for minimizer states in that region.
inline StateMask game_value_zero(const NumericGame& g, std::vector<std::uint32_t>* witness) {
    const NumericMdp& m = g.mdp;
    StateMask positive(m.state_count(), 0);
    for (std::size_t s = 0; s < m.state_count(); ++s) positive[s] = m.targets[s] ? 1 : 0;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t s = 0; s < m.state_count(); ++s) {
            if (positive[s]) continue;
            bool join;
            if (!g.minimizer[s]) {
                join = false;
                for (const auto& c : m.choices[s]) {
                    for (const auto& [t, p] : c.row)
                        if (p > 0.0 && positive[t]) { join = true; break; }
                    if (join) break;
                }
            } else {
                join = true;
                for (const auto& c : m.choices[s]) {
                    bool touches = false;
                    for (const auto& [t, p] : c.row)
                        if (p > 0.0 && positive[t]) { touches = true; break; }
                    if (!touches) { join = false; break; }
                }
            }
            if (join) { positive[s] = 1; changed = true; }
        }
    }
    StateMask zero(m.state_count(), 0);
    for (std::size_t s = 0; s < m.state_count(); ++s) zero[s] = positive[s] ? 0 : 1;
    if (witness) {
        witness->assign(m.state_count(), 0);
        for (std::size_t s = 0; s < m.state_count(); ++s) {
            if (!zero[s] || !g.minimizer[s]) continue;
            for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
                bool avoids = true;
                for (const auto& [t, p] : m.choices[s][k].row)
                    if (p > 0.0 && positive[t]) { avoids = false; break; }
                if (avoids) { (*witness)[s] = k; break; }
            }
        }
    }
    return zero;
}

inline double choice_value(const NumericChoice& c, const std::vector<double>& x) {
    double v = 0.0;
    for (const auto& [t, p] : c.row) v += p * x[t];
    return v;
}

/// Policy extraction from converged values. Greedy selection is sound for
/// minimizing states, but maximizing states must avoid value-preserving
/// cycles: they are fixed in attractor order, each joining with its lowest-
/// indexed optimal choice that can move into the already-fixed region.
template <typename IsMinFn>
void extract_policy(const NumericMdp& m, IsMinFn&& isMin, const StateMask& zero,
                    const std::vector<std::uint32_t>& zeroWitness, SolveResult& res) {
    const std::size_t n = m.state_count();
    const double tieEps = 1e-9;
    res.policy.choice.assign(n, 0);
    StateMask fixed(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        if (m.targets[s]) { fixed[s] = 1; continue; }
        if (zero[s]) {
            res.policy.choice[s] = zeroWitness.empty() ? 0 : zeroWitness[s];
            fixed[s] = 1;
            continue;
        }
        if (isMin(s)) {
            double best = 2.0;
            std::uint32_t bestK = 0;
            for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
                double v = choice_value(m.choices[s][k], res.values);
                if (v < best) { best = v; bestK = k; }
            }
            res.policy.choice[s] = bestK;
        }
    }
    // Attractor passes: a maximizing state joins with an optimal choice that
    // moves probability into the already-fixed region; among those, the
    // choice carrying the most mass wins. Strong attachments (mass >= 0.5)
    // propagate first so that on value plateaus the policy follows the flow
    // towards the target instead of leaving slip-rate cycles behind.
    auto attractor_pass = [&](double minMass) {
        bool changed = false;
        for (std::size_t s = 0; s < n; ++s) {
            if (fixed[s]) continue;
            if (isMin(s)) {
                // the adversary may play any value-optimal choice, so the
                // state joins only when every optimal choice makes progress
                double best = 2.0;
                for (const auto& c : m.choices[s]) best = std::min(best, choice_value(c, res.values));
                bool allProgress = true;
                for (const auto& c : m.choices[s]) {
                    if (choice_value(c, res.values) > best + tieEps) continue;
                    bool touches = false;
                    for (const auto& [t, p] : c.row)
                        if (p > 0.0 && fixed[t]) { touches = true; break; }
                    if (!touches) { allProgress = false; break; }
                }
                if (allProgress) { fixed[s] = 1; changed = true; }
                continue;
            }
            double best = -1.0;
            for (const auto& c : m.choices[s]) best = std::max(best, choice_value(c, res.values));
            double bestMass = 0.0;
            std::uint32_t bestK = 0;
            bool found = false;
            for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
                double v = choice_value(m.choices[s][k], res.values);
                if (v + tieEps < best) continue;
                double mass = 0.0;
                for (const auto& [t, p] : m.choices[s][k].row)
                    if (fixed[t]) mass += p;
                if (mass >= minMass && mass > bestMass) {
                    bestMass = mass;
                    bestK = k;
                    found = true;
                }
            }
            if (found) {
                res.policy.choice[s] = bestK;
                fixed[s] = 1;
                changed = true;
            }
        }
        return changed;
    };
    while (true) {
        if (attractor_pass(0.5)) continue;
        if (attractor_pass(1e-12)) continue;
        break;
    }
    // numerical corner: states that never joined keep a greedy choice
    for (std::size_t s = 0; s < n; ++s) {
        if (fixed[s] || isMin(s) || m.targets[s]) continue;
        double best = -1.0;
        std::uint32_t bestK = 0;
        for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
            double v = choice_value(m.choices[s][k], res.values);
            if (v > best) { best = v; bestK = k; }
        }
        res.policy.choice[s] = bestK;
    }
}

/// Core value iteration. `isMin` tells per state whether to minimize.
template <typename IsMinFn>
SolveResult value_iterate(const NumericMdp& m, IsMinFn&& isMin, const StateMask& zero,
                          const std::vector<std::uint32_t>& zeroWitness,
                          const SolveOptions& opts) {
    const std::size_t n = m.state_count();
    std::vector<double> x(n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        if (m.targets[s]) x[s] = 1.0;
    SolveResult res;
    res.monotone = true;
    std::size_t sweeps = 0;
    double diff = 0.0;
    do {
        diff = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            if (m.targets[s] || zero[s]) continue;
            bool mn = isMin(s);
            double best = mn ? 2.0 : -1.0;
            for (const auto& c : m.choices[s]) {
                double v = choice_value(c, x);
                if (mn ? (v < best) : (v > best)) best = v;
            }
            double d = best - x[s];
            if (d < -1e-12) res.monotone = false;
            if (std::abs(d) > diff) diff = std::abs(d);
            x[s] = best;
        }
        ++sweeps;
        if (sweeps >= opts.maxSweeps)
            throw SolverError("value iteration did not converge within " +
                              std::to_string(opts.maxSweeps) + " sweeps");
    } while (diff >= opts.tolerance);

    res.values = std::move(x);
    res.iterations = sweeps;
    extract_policy(m, isMin, zero, zeroWitness, res);
    res.value = res.values[m.initial];
    return res;
}

} // namespace detail

/// Reachability value of a Markov chain (single choice per state).
inline SolveResult mc_reach(const NumericMdp& chain, const SolveOptions& opts = {}) {
    StateMask zero = detail::prob0_max(chain);
    return detail::value_iterate(chain, [](std::size_t) { return false; }, zero, {}, opts);
}

/// Optimal reachability of an MDP with an optimizing memoryless policy;
/// ties are broken towards the lowest choice index.
inline SolveResult mdp_opt_reach(const NumericMdp& m, Direction dir, const SolveOptions& opts = {}) {
    if (dir == Direction::Max) {
        StateMask zero = detail::prob0_max(m);
        return detail::value_iterate(m, [](std::size_t) { return false; }, zero, {}, opts);
    }
    std::vector<std::uint32_t> witness;
    StateMask zero = detail::prob0_min(m, &witness);
    return detail::value_iterate(m, [](std::size_t) { return true; }, zero, witness, opts);
}

/// Value of a reachability stochastic game (maximizer vs minimizer) with
/// the optimal pair of memoryless policies.
inline SolveResult sg_solve(const NumericGame& g, const SolveOptions& opts = {}) {
    std::vector<std::uint32_t> witness;
    StateMask zero = detail::game_value_zero(g, &witness);
    return detail::value_iterate(
        g.mdp, [&](std::size_t s) { return g.minimizer[s] != 0; }, zero, witness, opts);
}

/// Strategy-iteration cross-check for games: fixes the minimizer's policy,
/// solves the induced max-MDP, then improves the minimizer greedily.
inline SolveResult sg_solve_policy_iteration(const NumericGame& g, const SolveOptions& opts = {}) {
    const NumericMdp& m = g.mdp;
    const std::size_t n = m.state_count();
    std::vector<std::uint32_t> sigma2;
    detail::game_value_zero(g, &sigma2);
    SolveResult eval;
    for (std::size_t round = 0; round < 10000; ++round) {
        NumericMdp fixed;
        fixed.initial = m.initial;
        fixed.targets = m.targets;
        fixed.choices.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            if (g.minimizer[s]) fixed.choices[s].push_back(m.choices[s][sigma2[s]]);
            else fixed.choices[s] = m.choices[s];
        }
        eval = mdp_opt_reach(fixed, Direction::Max, opts);
        bool improved = false;
        for (std::size_t s = 0; s < n; ++s) {
            if (!g.minimizer[s] || m.targets[s]) continue;
            double current = detail::choice_value(m.choices[s][sigma2[s]], eval.values);
            double best = current;
            std::uint32_t bestK = sigma2[s];
            for (std::uint32_t k = 0; k < m.choices[s].size(); ++k) {
                double v = detail::choice_value(m.choices[s][k], eval.values);
                if (v < best - 1e-9) { best = v; bestK = k; }
            }
            if (bestK != sigma2[s]) { sigma2[s] = bestK; improved = true; }
        }
        if (!improved) {
            for (std::size_t s = 0; s < n; ++s)
                if (g.minimizer[s]) eval.policy.choice[s] = sigma2[s];
            return eval;
        }
    }
    throw SolverError("policy iteration did not converge");
}

// --- builders ---------------------------------------------------------------

inline NumericMdp to_numeric(const ExplicitMdp& m) {
    NumericMdp out;
    out.initial = m.initial;
    out.targets = m.targets;
    out.choices.resize(m.state_count());
    for (std::size_t s = 0; s < m.state_count(); ++s) {
        for (const auto& a : m.actions[s]) {
            NumericChoice c;
            c.row.reserve(a.row.size());
            for (const auto& e : a.row) c.row.emplace_back(e.state, e.prob.to_double());
            out.choices[s].push_back(std::move(c));
        }
    }
    return out;
}

inline NumericMdp to_numeric(const MarkovChain& mc) {
    NumericMdp out;
    out.initial = mc.initial;
    out.targets = mc.targets;
    out.choices.resize(mc.state_count());
    for (std::size_t s = 0; s < mc.state_count(); ++s) {
        NumericChoice c;
        c.row.reserve(mc.rows[s].size());
        for (const auto& e : mc.rows[s]) c.row.emplace_back(e.state, e.prob.to_double());
        out.choices[s].push_back(std::move(c));
    }
    return out;
}

/// Restricted quotient as a plain MDP; `choiceMap` recovers the
/// (action, class) pair behind each numeric choice.
struct NumericQuotient {
    NumericMdp mdp;
    std::vector<std::vector<QuotientChoice>> choiceMap;
};

inline NumericQuotient to_numeric(const Restriction& r) {
    const QuotientMdp& q = *r.quotient;
    NumericQuotient out;
    out.mdp.initial = q.initial;
    out.mdp.targets = q.targets;
    out.mdp.choices.resize(q.state_count());
    out.choiceMap.resize(q.state_count());
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        for (std::uint32_t a = 0; a < q.actions[s].size(); ++a) {
            const auto& classes = q.actions[s][a].classes;
            for (std::uint32_t k = 0; k < classes.size(); ++k) {
                if (!classes[k].members.intersects(r.subset)) continue;
                NumericChoice c;
                c.row.reserve(classes[k].row.size());
                for (const auto& e : classes[k].row)
                    c.row.emplace_back(e.state, e.prob.to_double());
                out.mdp.choices[s].push_back(std::move(c));
                out.choiceMap[s].push_back(QuotientChoice{a, k});
            }
        }
    }
    return out;
}

/// Quotient with the base action fixed per state and the identifier-class
/// choice left as nondeterminism. Built over the policy's reachable fragment
/// only: states the policy cannot visit from the initial state do not affect
/// the initial value, and their fallback choices may mix arbitrarily slowly.
inline NumericQuotient to_numeric_base_fixed(const Restriction& r, const Policy& base) {
    const QuotientMdp& q = *r.quotient;
    StateMask fragment = reachable_fragment_base(r, base);
    std::vector<std::uint32_t> remap(q.state_count(), UINT32_MAX);
    std::uint32_t next = 0;
    for (std::size_t s = 0; s < q.state_count(); ++s)
        if (fragment[s]) remap[s] = next++;
    NumericQuotient out;
    out.mdp.initial = remap[q.initial];
    out.mdp.targets.assign(next, 0);
    out.mdp.choices.resize(next);
    out.choiceMap.resize(next);
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        if (!fragment[s]) continue;
        std::uint32_t id = remap[s];
        out.mdp.targets[id] = q.targets.empty() ? 0 : q.targets[s];
        std::uint32_t a = base.choice[s];
        if (a >= q.actions[s].size())
            throw ModelError("policy selects unavailable action at state " + std::to_string(s));
        const auto& classes = q.actions[s][a].classes;
        for (std::uint32_t k = 0; k < classes.size(); ++k) {
            if (!classes[k].members.intersects(r.subset)) continue;
            NumericChoice c;
            c.row.reserve(classes[k].row.size());
            for (const auto& e : classes[k].row) c.row.emplace_back(remap[e.state], e.prob.to_double());
            out.mdp.choices[id].push_back(std::move(c));
            out.choiceMap[id].push_back(QuotientChoice{a, k});
        }
    }
    return out;
}

/// MDP over the quotient states where each base action carries the uniform
/// mixture over its surviving identifier classes.
inline NumericMdp to_numeric_uniform_mixture(const Restriction& r) {
    const QuotientMdp& q = *r.quotient;
    NumericMdp out;
    out.initial = q.initial;
    out.targets = q.targets;
    out.choices.resize(q.state_count());
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        for (const auto& qa : q.actions[s]) {
            std::vector<const SparseRow*> rows;
            for (const auto& cls : qa.classes)
                if (cls.members.intersects(r.subset)) rows.push_back(&cls.row);
            if (rows.empty()) continue;
            NumericChoice c;
            std::vector<std::pair<std::uint32_t, double>> acc;
            double w = 1.0 / static_cast<double>(rows.size());
            for (const SparseRow* row : rows)
                for (const auto& e : *row) acc.emplace_back(e.state, w * e.prob.to_double());
            std::sort(acc.begin(), acc.end(),
                      [](const auto& x, const auto& y) { return x.first < y.first; });
            for (const auto& [t, p] : acc) {
                if (!c.row.empty() && c.row.back().first == t) c.row.back().second += p;
                else c.row.emplace_back(t, p);
            }
            out.choices[s].push_back(std::move(c));
        }
    }
    return out;
}

} // namespace famtree
