#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "famtree/family.hpp"
#include "famtree/mdp.hpp"

namespace famtree {

/// One identifier class of a (state, action) pair: the set of family members
/// that share this exact distribution, plus the distribution itself.
struct QuotientClass {
    FamilyIndexSet members;
    SparseRow row;
};

struct QuotientAction {
    std::uint32_t nameId = 0;
    std::vector<QuotientClass> classes; // disjoint, cover the full index set
};

/// Shared-state-space representation of the whole family: per state and base
/// action, one distribution per identifier class. The class index sets are
/// the coloring that maps quotient actions back to family members.
struct QuotientMdp {
    std::uint32_t initial = 0;
    std::vector<std::vector<QuotientAction>> actions; // per state
    std::vector<std::string> actionNames;
    std::vector<std::vector<std::int64_t>> stateValuations;
    std::vector<std::string> variableNames;
    HoleSpace space;
    StateMask targets;
    std::vector<std::string> warnings;

    std::size_t state_count() const { return actions.size(); }
    std::uint64_t family_size() const { return space.size(); }

    const std::string& action_name(std::uint32_t state, std::uint32_t action) const {
        return actionNames[actions[state][action].nameId];
    }

    /// Index of the class of (state, action) containing the given member.
    std::uint32_t class_of_member(std::uint32_t state, std::uint32_t action,
                                  std::uint64_t member) const {
        const auto& cls = actions[state][action].classes;
        for (std::uint32_t k = 0; k < cls.size(); ++k)
            if (cls[k].members.contains(member)) return k;
        throw ModelError("identifier classes do not cover member " + std::to_string(member));
    }
};

/// A subfamily view on a quotient: only classes intersecting the subset
/// survive, with effective color class ∩ subset. No distributions are copied.
struct Restriction {
    const QuotientMdp* quotient = nullptr;
    FamilyIndexSet subset;

    bool survives(std::uint32_t state, std::uint32_t action, std::uint32_t cls) const {
        return quotient->actions[state][action].classes[cls].members.intersects(subset);
    }

    FamilyIndexSet effective_color(std::uint32_t state, std::uint32_t action,
                                   std::uint32_t cls) const {
        return quotient->actions[state][action].classes[cls].members & subset;
    }

    /// Surviving class indices of a (state, action) pair, in quotient order.
    std::vector<std::uint32_t> surviving_classes(std::uint32_t state, std::uint32_t action) const {
        std::vector<std::uint32_t> out;
        const auto& cls = quotient->actions[state][action].classes;
        for (std::uint32_t k = 0; k < cls.size(); ++k)
            if (cls[k].members.intersects(subset)) out.push_back(k);
        return out;
    }
};

inline Restriction restrict(const QuotientMdp& quotient, FamilyIndexSet subset) {
    if (subset.empty()) throw ModelError("restriction to an empty subfamily");
    if (subset.universe_size() != quotient.family_size())
        throw ModelError("restriction subset over a different family");
    return Restriction{&quotient, std::move(subset)};
}

inline Restriction restrict(const Restriction& r, const FamilyIndexSet& subset) {
    return restrict(*r.quotient, r.subset & subset);
}

/// Choice of a quotient action: base action plus identifier class.
struct QuotientChoice {
    std::uint32_t action = 0;
    std::uint32_t cls = 0;
};

/// Policy over the quotient MDP: one (action, class) choice per state.
struct QuotientPolicy {
    std::vector<QuotientChoice> choice;
};

inline MarkovChain induced_mc(const Restriction& r, const QuotientPolicy& policy) {
    const QuotientMdp& q = *r.quotient;
    if (policy.choice.size() != q.state_count())
        throw ModelError("policy is not total on the quotient's states");
    MarkovChain mc;
    mc.initial = q.initial;
    mc.targets = q.targets;
    mc.rows.reserve(q.state_count());
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        const auto& c = policy.choice[s];
        if (c.action >= q.actions[s].size() ||
            c.cls >= q.actions[s][c.action].classes.size() ||
            !r.survives(s, c.action, c.cls))
            throw ModelError("policy selects unavailable action at state " + std::to_string(s));
        mc.rows.push_back(q.actions[s][c.action].classes[c.cls].row);
    }
    return mc;
}

/// States reachable under a base-action policy when the identifier choice is
/// left open: closure over all surviving class rows of the chosen actions.
inline StateMask reachable_fragment_base(const Restriction& r, const Policy& base) {
    const QuotientMdp& q = *r.quotient;
    if (base.choice.size() != q.state_count())
        throw ModelError("policy is not total on the quotient's states");
    StateMask seen(q.state_count(), 0);
    std::deque<std::uint32_t> queue{q.initial};
    seen[q.initial] = 1;
    while (!queue.empty()) {
        std::uint32_t s = queue.front();
        queue.pop_front();
        std::uint32_t a = base.choice[s];
        if (a >= q.actions[s].size())
            throw ModelError("policy selects unavailable action at state " + std::to_string(s));
        const auto& cls = q.actions[s][a].classes;
        for (std::uint32_t k = 0; k < cls.size(); ++k) {
            if (!cls[k].members.intersects(r.subset)) continue;
            for (const auto& e : cls[k].row)
                if (!seen[e.state]) { seen[e.state] = 1; queue.push_back(e.state); }
        }
    }
    return seen;
}

/// Reachable fragment of a full quotient policy (action and class fixed).
inline StateMask reachable_fragment(const Restriction& r, const QuotientPolicy& policy) {
    const QuotientMdp& q = *r.quotient;
    StateMask seen(q.state_count(), 0);
    std::deque<std::uint32_t> queue{q.initial};
    seen[q.initial] = 1;
    while (!queue.empty()) {
        std::uint32_t s = queue.front();
        queue.pop_front();
        const auto& c = policy.choice[s];
        for (const auto& e : q.actions[s][c.action].classes[c.cls].row)
            if (!seen[e.state]) { seen[e.state] = 1; queue.push_back(e.state); }
    }
    return seen;
}

/// Extracts one member as an explicit MDP over the shared state space by
/// selecting, per (state, action), the class that contains the member.
inline ExplicitMdp member_from_quotient(const QuotientMdp& q, std::uint64_t member) {
    ExplicitMdp m;
    m.initial = q.initial;
    m.actionNames = q.actionNames;
    m.stateValuations = q.stateValuations;
    m.variableNames = q.variableNames;
    m.targets = q.targets;
    m.actions.resize(q.state_count());
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        for (const auto& qa : q.actions[s]) {
            for (const auto& cls : qa.classes) {
                if (cls.members.contains(member)) {
                    m.actions[s].push_back(ExplicitAction{qa.nameId, cls.row});
                    break;
                }
            }
        }
    }
    return m;
}

} // namespace famtree
