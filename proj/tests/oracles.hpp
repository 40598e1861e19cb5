#pragma once

// Independent oracles for the test suites: dense linear-system reachability,
// exhaustive policy/strategy enumeration, and a brute-force quotient builder
// working directly on explicit member lists. These deliberately avoid the
// library's value-iteration path.

#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "famtree/family.hpp"
#include "famtree/mdp.hpp"
#include "famtree/quotient.hpp"
#include "famtree/solver.hpp"

namespace oracles {

using famtree::ExplicitMdp;
using famtree::FamilyIndexSet;
using famtree::NumericMdp;
using famtree::Policy;
using famtree::QuotientMdp;
using famtree::Rational;
using famtree::StateMask;

/// Dense chain as double rows; row[s][t] = probability of s -> t.
struct DenseChain {
    std::vector<std::vector<double>> rows;
    std::uint32_t initial = 0;
    StateMask targets;
};

inline DenseChain dense_chain(const NumericMdp& mdp, const Policy& policy) {
    DenseChain c;
    c.initial = mdp.initial;
    c.targets = mdp.targets;
    c.rows.assign(mdp.state_count(), std::vector<double>(mdp.state_count(), 0.0));
    for (std::size_t s = 0; s < mdp.state_count(); ++s)
        for (const auto& [t, p] : mdp.choices[s][policy.choice[s]].row) c.rows[s][t] += p;
    return c;
}

/// Exact reachability values via Gaussian elimination on the states that can
/// reach the target at all; everything else is exactly zero.
inline std::vector<double> chain_reach_linear(const DenseChain& chain) {
    const std::size_t n = chain.rows.size();
    // backward reachability
    StateMask canReach(n, 0);
    std::deque<std::uint32_t> queue;
    for (std::size_t s = 0; s < n; ++s)
        if (chain.targets[s]) { canReach[s] = 1; queue.push_back(static_cast<std::uint32_t>(s)); }
    while (!queue.empty()) {
        std::uint32_t t = queue.front();
        queue.pop_front();
        for (std::size_t s = 0; s < n; ++s)
            if (!canReach[s] && chain.rows[s][t] > 0.0) {
                canReach[s] = 1;
                queue.push_back(static_cast<std::uint32_t>(s));
            }
    }
    std::vector<std::uint32_t> unknown;
    std::vector<int> indexOf(n, -1);
    for (std::size_t s = 0; s < n; ++s) {
        if (canReach[s] && !chain.targets[s]) {
            indexOf[s] = static_cast<int>(unknown.size());
            unknown.push_back(static_cast<std::uint32_t>(s));
        }
    }
    const std::size_t m = unknown.size();
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        std::uint32_t s = unknown[i];
        a[i][i] += 1.0;
        for (std::size_t t = 0; t < n; ++t) {
            double p = chain.rows[s][t];
            if (p == 0.0) continue;
            if (chain.targets[t]) a[i][m] += p;
            else if (indexOf[t] >= 0) a[i][indexOf[t]] -= p;
        }
    }
    // gaussian elimination with partial pivoting
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t pivot = col;
        for (std::size_t rr = col + 1; rr < m; ++rr)
            if (std::abs(a[rr][col]) > std::abs(a[pivot][col])) pivot = rr;
        std::swap(a[col], a[pivot]);
        if (std::abs(a[col][col]) < 1e-14)
            throw std::runtime_error("singular reachability system");
        for (std::size_t rr = 0; rr < m; ++rr) {
            if (rr == col) continue;
            double f = a[rr][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t cc = col; cc <= m; ++cc) a[rr][cc] -= f * a[col][cc];
        }
    }
    std::vector<double> values(n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        if (chain.targets[s]) values[s] = 1.0;
    for (std::size_t i = 0; i < m; ++i) values[unknown[i]] = a[i][m] / a[i][i];
    return values;
}

inline double chain_value_linear(const NumericMdp& mdp, const Policy& policy) {
    DenseChain c = dense_chain(mdp, policy);
    return chain_reach_linear(c)[c.initial];
}

/// Enumerates every deterministic memoryless policy (capped) and evaluates
/// each induced chain exactly.
struct ExhaustiveResult {
    double best = 0.0;
    Policy policy;
    std::size_t enumerated = 0;
};

template <typename Better>
ExhaustiveResult exhaustive_opt(const NumericMdp& mdp, Better&& better, double worst,
                                std::size_t cap = 1 << 22) {
    const std::size_t n = mdp.state_count();
    std::size_t total = 1;
    for (std::size_t s = 0; s < n; ++s) {
        total *= mdp.choices[s].size();
        if (total > cap) throw std::runtime_error("policy space exceeds the oracle cap");
    }
    ExhaustiveResult res;
    res.best = worst;
    Policy p;
    p.choice.assign(n, 0);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t s = 0; s < n; ++s) {
            p.choice[s] = static_cast<std::uint32_t>(rem % mdp.choices[s].size());
            rem /= mdp.choices[s].size();
        }
        double v = chain_value_linear(mdp, p);
        if (better(v, res.best)) {
            res.best = v;
            res.policy = p;
        }
        ++res.enumerated;
    }
    return res;
}

inline ExhaustiveResult exhaustive_max(const NumericMdp& mdp) {
    return exhaustive_opt(mdp, [](double a, double b) { return a > b; }, -1.0);
}
inline ExhaustiveResult exhaustive_min(const NumericMdp& mdp) {
    return exhaustive_opt(mdp, [](double a, double b) { return a < b; }, 2.0);
}

/// Exhaustive sup-inf and inf-sup values of a two-player game.
struct GameTableResult {
    double supInf = 0.0;
    double infSup = 0.0;
};

inline GameTableResult exhaustive_game(const famtree::NumericGame& game,
                                       std::size_t cap = 1 << 18) {
    const NumericMdp& m = game.mdp;
    std::vector<std::uint32_t> s1, s2;
    for (std::size_t s = 0; s < m.state_count(); ++s)
        (game.minimizer[s] ? s2 : s1).push_back(static_cast<std::uint32_t>(s));
    auto countFor = [&](const std::vector<std::uint32_t>& states) {
        std::size_t total = 1;
        for (auto s : states) {
            total *= m.choices[s].size();
            if (total > cap) throw std::runtime_error("strategy space exceeds the oracle cap");
        }
        return total;
    };
    std::size_t n1 = countFor(s1), n2 = countFor(s2);
    auto fill = [&](Policy& p, const std::vector<std::uint32_t>& states, std::size_t k) {
        for (auto s : states) {
            p.choice[s] = static_cast<std::uint32_t>(k % m.choices[s].size());
            k /= m.choices[s].size();
        }
    };
    std::vector<std::vector<double>> table(n1, std::vector<double>(n2, 0.0));
    Policy p;
    p.choice.assign(m.state_count(), 0);
    for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t j = 0; j < n2; ++j) {
            fill(p, s1, i);
            fill(p, s2, j);
            table[i][j] = chain_value_linear(m, p);
        }
    }
    GameTableResult res;
    res.supInf = -1.0;
    for (std::size_t i = 0; i < n1; ++i) {
        double inf = 2.0;
        for (std::size_t j = 0; j < n2; ++j) inf = std::min(inf, table[i][j]);
        res.supInf = std::max(res.supInf, inf);
    }
    res.infSup = 2.0;
    for (std::size_t j = 0; j < n2; ++j) {
        double sup = -1.0;
        for (std::size_t i = 0; i < n1; ++i) sup = std::max(sup, table[i][j]);
        res.infSup = std::min(res.infSup, sup);
    }
    return res;
}

/// Brute-force quotient construction from an explicit member list: group the
/// member distributions of every (state, action) pair by exact equality.
/// Members must share state and action availability.
inline QuotientMdp quotient_from_members(const std::vector<ExplicitMdp>& members) {
    if (members.empty()) throw std::runtime_error("empty member list");
    const ExplicitMdp& first = members[0];
    QuotientMdp q;
    q.initial = first.initial;
    q.actionNames = first.actionNames;
    q.stateValuations = first.stateValuations;
    q.variableNames = first.variableNames;
    q.targets = first.targets;
    famtree::Hole hole;
    hole.name = "member";
    for (std::size_t i = 0; i < members.size(); ++i)
        hole.values.push_back(static_cast<std::int64_t>(i));
    q.space = famtree::HoleSpace({hole});
    q.actions.resize(first.state_count());
    for (std::size_t s = 0; s < first.state_count(); ++s) {
        for (std::size_t a = 0; a < first.actions[s].size(); ++a) {
            famtree::QuotientAction qa;
            qa.nameId = first.actions[s][a].nameId;
            for (std::size_t i = 0; i < members.size(); ++i) {
                if (members[i].actions[s].size() != first.actions[s].size())
                    throw std::runtime_error("members disagree on action availability");
                const famtree::SparseRow& row = members[i].actions[s][a].row;
                bool placed = false;
                for (auto& cls : qa.classes) {
                    if (cls.row == row) {
                        cls.members.insert(i);
                        placed = true;
                        break;
                    }
                }
                if (!placed) {
                    famtree::QuotientClass cls;
                    cls.row = row;
                    cls.members = FamilyIndexSet(members.size());
                    cls.members.insert(i);
                    qa.classes.push_back(std::move(cls));
                }
            }
            q.actions[s].push_back(std::move(qa));
        }
    }
    return q;
}

// --- random generators -------------------------------------------------------

/// Random sparse rational distribution over up to `maxSupport` states.
inline famtree::SparseRow random_row(std::mt19937_64& rng, std::uint32_t states,
                                     int maxSupport = 3) {
    std::uniform_int_distribution<int> supportDist(1, maxSupport);
    std::uniform_int_distribution<std::uint32_t> stateDist(0, states - 1);
    std::uniform_int_distribution<std::int64_t> weightDist(1, 9);
    int support = supportDist(rng);
    std::vector<std::uint32_t> succ;
    std::vector<std::int64_t> weights;
    std::int64_t total = 0;
    for (int k = 0; k < support; ++k) {
        succ.push_back(stateDist(rng));
        weights.push_back(weightDist(rng));
        total += weights.back();
    }
    famtree::SparseRow row;
    for (int k = 0; k < support; ++k)
        row.push_back(famtree::DistEntry{succ[k], Rational(weights[k], total)});
    famtree::normalize_row(row);
    return row;
}

/// Random explicit MDP with exact rational rows and random absorbing targets.
inline ExplicitMdp random_mdp(std::mt19937_64& rng, std::uint32_t states, int maxActions,
                              int targetCount = 1) {
    std::uniform_int_distribution<int> actionDist(1, maxActions);
    ExplicitMdp m;
    m.initial = 0;
    m.actions.resize(states);
    m.targets.assign(states, 0);
    std::vector<std::uint32_t> shuffled(states);
    for (std::uint32_t s = 0; s < states; ++s) shuffled[s] = s;
    std::shuffle(shuffled.begin() + 1, shuffled.end(), rng); // keep 0 as initial
    for (int k = 0; k < targetCount && k + 1 < static_cast<int>(states); ++k)
        m.targets[shuffled[states - 1 - k]] = 1;
    for (std::uint32_t s = 0; s < states; ++s) {
        int na = actionDist(rng);
        for (int a = 0; a < na; ++a) {
            famtree::ExplicitAction act;
            act.nameId = static_cast<std::uint32_t>(a);
            if (m.targets[s]) act.row = famtree::SparseRow{{s, Rational(1)}};
            else act.row = random_row(rng, states);
            m.actions[s].push_back(std::move(act));
        }
    }
    for (std::uint32_t a = 0; a < 8; ++a) m.actionNames.push_back("a" + std::to_string(a));
    return m;
}

/// Random family sharing availability: some (state, action) rows vary across
/// members (in small groups), the rest coincide.
inline std::vector<ExplicitMdp> random_family(std::mt19937_64& rng, std::uint32_t states,
                                              int maxActions, std::size_t memberCount,
                                              double varyProbability = 0.35) {
    ExplicitMdp base = random_mdp(rng, states, maxActions);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> variantDist(2, 3);
    std::vector<ExplicitMdp> members(memberCount, base);
    for (std::uint32_t s = 0; s < states; ++s) {
        for (std::size_t a = 0; a < base.actions[s].size(); ++a) {
            if (base.targets[s] || coin(rng) >= varyProbability) continue;
            int variants = variantDist(rng);
            std::vector<famtree::SparseRow> rows;
            rows.push_back(base.actions[s][a].row);
            for (int v = 1; v < variants; ++v) rows.push_back(random_row(rng, states));
            std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
            for (std::size_t i = 0; i < memberCount; ++i)
                members[i].actions[s][a].row = rows[pick(rng)];
        }
    }
    return members;
}

/// Random game: underlying MDP plus a random owner per state.
inline famtree::NumericGame random_game(std::mt19937_64& rng, std::uint32_t states,
                                        int maxActions) {
    ExplicitMdp m = random_mdp(rng, states, maxActions);
    famtree::NumericGame g;
    g.mdp = famtree::to_numeric(m);
    g.minimizer.assign(states, 0);
    std::uniform_int_distribution<int> owner(0, 1);
    for (std::uint32_t s = 0; s < states; ++s) g.minimizer[s] = static_cast<char>(owner(rng));
    return g;
}

/// Random sketch text: one bounded counter, per-state commands for a shared
/// action alphabet, hole-dependent successors, exact fractional probabilities.
inline std::string random_sketch_text(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> statesDist(3, 10);
    std::uniform_int_distribution<int> actionsDist(1, 4);
    std::uniform_int_distribution<int> holesDist(1, 3);
    std::uniform_int_distribution<int> domainDist(2, 4);
    std::uniform_int_distribution<std::int64_t> weightDist(1, 5);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    int n = statesDist(rng);
    int actions = actionsDist(rng);
    int holes = holesDist(rng);
    std::vector<int> domain(holes);
    std::size_t family = 1;
    for (int h = 0; h < holes; ++h) {
        domain[h] = domainDist(rng);
        family *= domain[h];
        if (family > 64) { domain[h] = 1; }
    }
    std::string text = "mdp\n\n";
    for (int h = 0; h < holes; ++h) {
        if (domain[h] == 1)
            text += "hole int H" + std::to_string(h) + " in {0..0};\n";
        else
            text += "hole int H" + std::to_string(h) + " in {0.." +
                    std::to_string(domain[h] - 1) + "};\n";
    }
    text += "label \"goal\" = s=" + std::to_string(n - 1) + ";\n";
    text += "module chain\n";
    text += "  s : [0.." + std::to_string(n - 1) + "] init 0;\n";
    auto successor = [&]() {
        double kind = coin(rng);
        std::uniform_int_distribution<int> stateDist(0, n - 1);
        std::uniform_int_distribution<int> holePick(0, holes - 1);
        int target = stateDist(rng);
        if (kind < 0.45) return std::to_string(target);
        int h = holePick(rng);
        if (kind < 0.75) {
            // hole-shifted target, clamped to the state range
            return "min(" + std::to_string(n - 1) + ", max(0, " + std::to_string(target) +
                   " + H" + std::to_string(h) + "))";
        }
        std::uniform_int_distribution<int> valuePick(0, domain[h] - 1);
        int v = valuePick(rng);
        int other = stateDist(rng);
        return "(H" + std::to_string(h) + "=" + std::to_string(v) + " ? " +
               std::to_string(target) + " : " + std::to_string(other) + ")";
    };
    for (int state = 0; state < n; ++state) {
        for (int a = 0; a < actions; ++a) {
            std::uniform_int_distribution<int> branchDist(1, 3);
            int branches = branchDist(rng);
            std::vector<std::int64_t> weights(branches);
            std::int64_t total = 0;
            for (auto& w : weights) { w = weightDist(rng); total += w; }
            std::string cmd = "  [act" + std::to_string(a) + "] s=" + std::to_string(state) + " -> ";
            for (int b = 0; b < branches; ++b) {
                if (b) cmd += " + ";
                cmd += std::to_string(weights[b]) + "/" + std::to_string(total) + ": (s'=" +
                       successor() + ")";
            }
            cmd += ";\n";
            text += cmd;
        }
    }
    text += "endmodule\n";
    return text;
}

} // namespace oracles
