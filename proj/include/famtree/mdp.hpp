#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "famtree/rational.hpp"

namespace famtree {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ResourceLimitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using StateMask = std::vector<char>;

struct DistEntry {
    std::uint32_t state;
    Rational prob;

    friend bool operator==(const DistEntry& a, const DistEntry& b) {
        return a.state == b.state && a.prob == b.prob;
    }
};

/// Sparse distribution row: sorted by successor, duplicates merged, entries
/// with probability zero dropped.
using SparseRow = std::vector<DistEntry>;

inline void normalize_row(SparseRow& row) {
    std::sort(row.begin(), row.end(),
              [](const DistEntry& a, const DistEntry& b) { return a.state < b.state; });
    SparseRow out;
    for (const auto& e : row) {
        if (e.prob.is_zero()) continue;
        if (!out.empty() && out.back().state == e.state) out.back().prob += e.prob;
        else out.push_back(e);
    }
    row = std::move(out);
}

inline Rational row_sum(const SparseRow& row) {
    Rational s(0);
    for (const auto& e : row) s += e.prob;
    return s;
}

inline std::size_t row_hash(const SparseRow& row) {
    std::size_t h = 0x51ed270b0129ff2bULL;
    for (const auto& e : row) {
        h ^= (static_cast<std::size_t>(e.state) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
        h ^= (e.prob.hash() + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    }
    return h;
}

struct ExplicitAction {
    std::uint32_t nameId = 0;
    SparseRow row;
};

/// Explicit sparse MDP. Every state has at least one action (deadlocked
/// states received a self-loop during construction).
struct ExplicitMdp {
    std::uint32_t initial = 0;
    std::vector<std::vector<ExplicitAction>> actions;   // per state
    std::vector<std::string> actionNames;               // by nameId
    std::vector<std::vector<std::int64_t>> stateValuations; // empty for synthetic models
    std::vector<std::string> variableNames;
    StateMask targets;                                  // may be empty until a spec is applied
    std::vector<std::string> warnings;

    std::size_t state_count() const { return actions.size(); }

    const std::string& action_name(std::uint32_t state, std::uint32_t action) const {
        return actionNames[actions[state][action].nameId];
    }
};

/// Deterministic memoryless policy: one action index per state.
struct Policy {
    std::vector<std::uint32_t> choice;

    friend bool operator==(const Policy& a, const Policy& b) { return a.choice == b.choice; }
};

/// Markov chain obtained by fixing one action per state.
struct MarkovChain {
    std::uint32_t initial = 0;
    std::vector<SparseRow> rows;
    StateMask targets;

    std::size_t state_count() const { return rows.size(); }
};

inline MarkovChain induced_mc(const ExplicitMdp& mdp, const Policy& policy) {
    if (policy.choice.size() != mdp.state_count())
        throw ModelError("policy is not total on the model's states");
    MarkovChain mc;
    mc.initial = mdp.initial;
    mc.targets = mdp.targets;
    mc.rows.reserve(mdp.state_count());
    for (std::size_t s = 0; s < mdp.state_count(); ++s) {
        std::uint32_t a = policy.choice[s];
        if (a >= mdp.actions[s].size())
            throw ModelError("policy selects unavailable action at state " + std::to_string(s));
        mc.rows.push_back(mdp.actions[s][a].row);
    }
    return mc;
}

/// States reachable from the initial state when following the policy.
inline StateMask reachable_fragment(const ExplicitMdp& mdp, const Policy& policy) {
    if (policy.choice.size() != mdp.state_count())
        throw ModelError("policy is not total on the model's states");
    StateMask seen(mdp.state_count(), 0);
    std::deque<std::uint32_t> queue{mdp.initial};
    seen[mdp.initial] = 1;
    while (!queue.empty()) {
        std::uint32_t s = queue.front();
        queue.pop_front();
        std::uint32_t a = policy.choice[s];
        if (a >= mdp.actions[s].size())
            throw ModelError("policy selects unavailable action at state " + std::to_string(s));
        for (const auto& e : mdp.actions[s][a].row) {
            if (!seen[e.state]) { seen[e.state] = 1; queue.push_back(e.state); }
        }
    }
    return seen;
}

} // namespace famtree
