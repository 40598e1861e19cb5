#pragma once

#include <cstdint>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "famtree/quotient.hpp"
#include "famtree/solver.hpp"

namespace famtree {

/// Turn-based stochastic game over a restricted quotient. The maximizer
/// (Player 1) owns the quotient states and picks base actions; each pick
/// moves deterministically to the (state, action) decision point where the
/// minimizer (Player 2) picks an identifier class, whose distribution then
/// fires. Action choice happens before identifier choice, so the auxiliary
/// state count is bounded by the number of (state, action) pairs.
struct GameAbstraction {
    NumericGame game;
    Restriction restriction;
    std::uint32_t quotientStates = 0;                 // ids [0, quotientStates) are Player 1
    std::vector<std::pair<std::uint32_t, std::uint32_t>> decisionPoint; // S2 id -> (state, action)
    std::vector<std::vector<std::uint32_t>> decisionOf;                 // state -> S2 id per action
    std::vector<std::vector<std::uint32_t>> classOfChoice;              // S2 id -> quotient class per choice

    std::size_t player2_count() const { return decisionPoint.size(); }
};

/// Player-1 policy maps quotient states to base actions; Player-2 policy maps
/// decision points to identifier classes (absolute quotient class indices).
struct GamePolicy {
    Policy actionChoice;                    // per quotient state
    std::vector<std::uint32_t> classChoice; // per S2 id
};

inline GameAbstraction build_game(const Restriction& r) {
    const QuotientMdp& q = *r.quotient;
    GameAbstraction g;
    g.restriction = r;
    g.quotientStates = static_cast<std::uint32_t>(q.state_count());
    g.decisionOf.resize(q.state_count());
    for (std::uint32_t s = 0; s < q.state_count(); ++s) {
        for (std::uint32_t a = 0; a < q.actions[s].size(); ++a) {
            g.decisionOf[s].push_back(
                g.quotientStates + static_cast<std::uint32_t>(g.decisionPoint.size()));
            g.decisionPoint.emplace_back(s, a);
        }
    }
    const std::size_t total = q.state_count() + g.decisionPoint.size();
    g.game.mdp.initial = q.initial;
    g.game.mdp.choices.resize(total);
    g.game.mdp.targets.assign(total, 0);
    g.game.minimizer.assign(total, 0);
    for (std::uint32_t s = 0; s < q.state_count(); ++s) {
        g.game.mdp.targets[s] = q.targets.empty() ? 0 : q.targets[s];
        for (std::uint32_t a = 0; a < q.actions[s].size(); ++a) {
            NumericChoice c;
            c.row.emplace_back(g.decisionOf[s][a], 1.0);
            g.game.mdp.choices[s].push_back(std::move(c));
        }
    }
    g.classOfChoice.resize(g.decisionPoint.size());
    for (std::uint32_t d = 0; d < g.decisionPoint.size(); ++d) {
        auto [s, a] = g.decisionPoint[d];
        std::uint32_t id = g.quotientStates + d;
        g.game.minimizer[id] = 1;
        const auto& classes = q.actions[s][a].classes;
        for (std::uint32_t k = 0; k < classes.size(); ++k) {
            if (!classes[k].members.intersects(r.subset)) continue;
            NumericChoice c;
            c.row.reserve(classes[k].row.size());
            for (const auto& e : classes[k].row) c.row.emplace_back(e.state, e.prob.to_double());
            g.game.mdp.choices[id].push_back(std::move(c));
            g.classOfChoice[d].push_back(k);
        }
    }
    return g;
}

inline GamePolicy extract_game_policy(const GameAbstraction& g, const SolveResult& res) {
    GamePolicy p;
    p.actionChoice.choice.assign(g.quotientStates, 0);
    for (std::uint32_t s = 0; s < g.quotientStates; ++s)
        p.actionChoice.choice[s] = res.policy.choice[s];
    p.classChoice.assign(g.player2_count(), 0);
    for (std::uint32_t d = 0; d < g.player2_count(); ++d)
        p.classChoice[d] = g.classOfChoice[d][res.policy.choice[g.quotientStates + d]];
    return p;
}

enum class ConsistencyScope { Reachable, All };

/// Decision points visited when both players follow the policy.
inline std::vector<char> reachable_decision_points(const GameAbstraction& g,
                                                   const GamePolicy& policy) {
    const QuotientMdp& q = *g.restriction.quotient;
    std::vector<char> s1seen(g.quotientStates, 0), s2seen(g.player2_count(), 0);
    std::deque<std::uint32_t> queue{q.initial};
    s1seen[q.initial] = 1;
    while (!queue.empty()) {
        std::uint32_t s = queue.front();
        queue.pop_front();
        std::uint32_t a = policy.actionChoice.choice[s];
        std::uint32_t d = g.decisionOf[s][a] - g.quotientStates;
        if (s2seen[d]) continue;
        s2seen[d] = 1;
        const auto& row = q.actions[s][a].classes[policy.classChoice[d]].row;
        for (const auto& e : row)
            if (!s1seen[e.state]) { s1seen[e.state] = 1; queue.push_back(e.state); }
    }
    return s2seen;
}

/// Identifiers the game policy is consistent in: members contained in every
/// identifier class the minimizer picks, over the given scope of decision
/// points. Scope All inspects every decision point with a surviving class.
inline FamilyIndexSet consistent_identifiers(const GameAbstraction& g, const GamePolicy& policy,
                                             ConsistencyScope scope) {
    const QuotientMdp& q = *g.restriction.quotient;
    FamilyIndexSet result = g.restriction.subset;
    std::vector<char> inScope;
    if (scope == ConsistencyScope::Reachable) inScope = reachable_decision_points(g, policy);
    for (std::uint32_t d = 0; d < g.player2_count(); ++d) {
        if (scope == ConsistencyScope::Reachable && !inScope[d]) continue;
        if (g.classOfChoice[d].empty()) continue;
        auto [s, a] = g.decisionPoint[d];
        result.intersect_with(q.actions[s][a].classes[policy.classChoice[d]].members);
        if (result.empty()) break;
    }
    return result;
}

/// Identifiers a quotient policy is consistent in on its reachable fragment:
/// intersection of the chosen actions' effective colors along reachable states.
inline FamilyIndexSet consistent_identifiers(const Restriction& r, const QuotientPolicy& policy) {
    const QuotientMdp& q = *r.quotient;
    FamilyIndexSet result = r.subset;
    StateMask reach = reachable_fragment(r, policy);
    for (std::uint32_t s = 0; s < q.state_count(); ++s) {
        if (!reach[s]) continue;
        const auto& c = policy.choice[s];
        result.intersect_with(q.actions[s][c.action].classes[c.cls].members);
        if (result.empty()) break;
    }
    return result;
}

/// DOT rendering of small games: circles for the maximizer's states, squares
/// for the decision points.
inline std::string export_game_dot(const GameAbstraction& g, std::size_t stateLimit = 200) {
    const QuotientMdp& q = *g.restriction.quotient;
    std::ostringstream out;
    if (g.game.mdp.state_count() > stateLimit) {
        out << "// game with " << g.game.mdp.state_count()
            << " states exceeds the export limit of " << stateLimit << "\n";
        return out.str();
    }
    out << "digraph game {\n";
    for (std::uint32_t s = 0; s < g.quotientStates; ++s) {
        out << "  s" << s << " [shape=circle,label=\"s" << s << "\"";
        if (!q.targets.empty() && q.targets[s]) out << ",peripheries=2";
        out << "];\n";
    }
    for (std::uint32_t d = 0; d < g.player2_count(); ++d) {
        auto [s, a] = g.decisionPoint[d];
        out << "  d" << d << " [shape=square,label=\"(s" << s << "," << q.action_name(s, a)
            << ")\"];\n";
    }
    for (std::uint32_t s = 0; s < g.quotientStates; ++s)
        for (std::uint32_t a = 0; a < q.actions[s].size(); ++a)
            out << "  s" << s << " -> d" << (g.decisionOf[s][a] - g.quotientStates)
                << " [label=\"" << q.action_name(s, a) << "\"];\n";
    for (std::uint32_t d = 0; d < g.player2_count(); ++d) {
        auto [s, a] = g.decisionPoint[d];
        for (std::uint32_t k : g.classOfChoice[d]) {
            const auto& cls = q.actions[s][a].classes[k];
            FamilyIndexSet color = cls.members & g.restriction.subset;
            std::string label = "{";
            bool firstRun = true;
            for (auto [start, len] : color.runs()) {
                if (!firstRun) label += ",";
                firstRun = false;
                label += std::to_string(start);
                if (len > 1) label += ".." + std::to_string(start + len - 1);
            }
            label += "}";
            for (const auto& e : cls.row)
                out << "  d" << d << " -> s" << e.state << " [label=\"" << label << " "
                    << e.prob.to_string() << "\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

} // namespace famtree
