#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "famtree/build.hpp"
#include "famtree/game.hpp"
#include "famtree/solver.hpp"
#include "famtree/tree.hpp"

namespace famtree {

enum class Method { Game, Random };

enum class SplitStrategy { OptimisticUnreachable, OptimisticReachable, Pessimistic };

inline const char* to_string(Method m) { return m == Method::Game ? "game" : "random"; }
inline const char* to_string(SplitStrategy s) {
    switch (s) {
        case SplitStrategy::OptimisticUnreachable: return "optimistic-unreachable";
        case SplitStrategy::OptimisticReachable: return "optimistic-reachable";
        case SplitStrategy::Pessimistic: return "pessimistic";
    }
    return "?";
}

struct SynthesisConfig {
    Method method = Method::Game;
    SplitStrategy split = SplitStrategy::OptimisticUnreachable;
    double lambda = 0.5;
    bool runPostprocess = true;
    SolveOptions solver;
    std::uint64_t seed = 0;            // recorded in reports; the randomized
                                       // abstraction uses a fixed uniform policy
    double timeLimitSeconds = 0.0;     // 0: unlimited
    std::size_t iterationCap = 0;      // 0: unlimited
    unsigned jobs = 1;
    bool checkInvariants = false;
};

struct SynthesisStats {
    std::size_t iterations = 0;        // game + MDP model-checking calls
    std::size_t gameSolves = 0;
    std::size_t quotientSolves = 0;
    std::size_t robustnessChecks = 0;
    std::size_t splits = 0;
    std::size_t nodes = 0, leaves = 0, policyLeaves = 0, unsatLeaves = 0, unknownLeaves = 0;
    std::size_t distinctPolicies = 0;
    std::size_t postprocessChecks = 0;
    double synthesisSeconds = 0.0;
    double postprocessSeconds = 0.0;
    bool aborted = false;
};

struct RobustOutcome {
    bool sat = false;
    double value = 0.0;
    Policy basePolicy;
    GamePolicy gamePolicy;                  // game method only
    std::optional<GameAbstraction> game;    // game method only
};

struct UnsatOutcome {
    bool unsat = false;
    double value = 0.0;
    QuotientPolicy maximizer;
};

namespace detail {

struct Counters {
    std::atomic<std::size_t> iterations{0};
    std::atomic<std::size_t> gameSolves{0};
    std::atomic<std::size_t> quotientSolves{0};
    std::atomic<std::size_t> robustnessChecks{0};
};

} // namespace detail

/// Solves the game abstraction for the subfamily. The returned policy pair
/// is meaningful either way: a winning maximizer policy is robust for every
/// member, a losing pair feeds optimistic splitting.
inline RobustOutcome find_robust_game(const Restriction& r, const SynthesisConfig& cfg,
                                      detail::Counters* counters = nullptr) {
    RobustOutcome out;
    out.game = build_game(r);
    SolveResult res = sg_solve(out.game->game, cfg.solver);
    if (counters) { counters->gameSolves++; counters->iterations++; }
    out.value = res.value;
    out.sat = meets_threshold(res.value, cfg.lambda);
    out.gamePolicy = extract_game_policy(*out.game, res);
    out.basePolicy = out.gamePolicy.actionChoice;
    return out;
}

/// Minimal reachability of the quotient when the base action is fixed per
/// state and the identifier class stays adversarial. A passing check makes
/// the base policy robust for the whole subfamily.
inline std::pair<bool, double> test_policy_robust(const Restriction& r, const Policy& base,
                                                  const SynthesisConfig& cfg,
                                                  detail::Counters* counters = nullptr) {
    NumericQuotient nq = to_numeric_base_fixed(r, base);
    SolveResult res = mdp_opt_reach(nq.mdp, Direction::Min, cfg.solver);
    if (counters) { counters->robustnessChecks++; counters->iterations++; }
    return {meets_threshold(res.value, cfg.lambda), res.value};
}

/// Randomized alternative: solve the MDP in which the identifier choice is a
/// fixed uniform mixture over classes, then accept the maximizing policy only
/// if it passes the robustness check.
inline RobustOutcome find_robust_random(const Restriction& r, const SynthesisConfig& cfg,
                                        detail::Counters* counters = nullptr) {
    RobustOutcome out;
    NumericMdp mix = to_numeric_uniform_mixture(r);
    SolveResult res = mdp_opt_reach(mix, Direction::Max, cfg.solver);
    if (counters) { counters->quotientSolves++; counters->iterations++; }
    out.basePolicy = res.policy; // mixture choices are exactly the base actions
    auto [robust, value] = test_policy_robust(r, out.basePolicy, cfg, counters);
    out.sat = robust;
    out.value = robust ? value : res.value;
    return out;
}

/// Maximal reachability of the restricted quotient; a value below the
/// threshold certifies that no member of the subfamily has a winning policy.
inline UnsatOutcome test_unsat(const Restriction& r, const SynthesisConfig& cfg,
                               detail::Counters* counters = nullptr) {
    NumericQuotient nq = to_numeric(r);
    SolveResult res = mdp_opt_reach(nq.mdp, Direction::Max, cfg.solver);
    if (counters) { counters->quotientSolves++; counters->iterations++; }
    UnsatOutcome out;
    out.value = res.value;
    out.unsat = !meets_threshold(res.value, cfg.lambda);
    out.maximizer.choice.resize(nq.mdp.state_count());
    for (std::size_t s = 0; s < nq.mdp.state_count(); ++s)
        out.maximizer.choice[s] = nq.choiceMap[s][res.policy.choice[s]];
    return out;
}

namespace detail {

/// Fallback split: bisect the domain of the hole with the most values still
/// present in the subset.
inline FamilyIndexSet hole_median_split(const HoleSpace& space, const FamilyIndexSet& subset) {
    std::size_t bestHole = space.hole_count();
    std::vector<std::size_t> bestVals;
    for (std::size_t h = 0; h < space.hole_count(); ++h) {
        std::vector<std::size_t> present;
        for (std::size_t v = 0; v < space.domain_size(h); ++v)
            if (space.value_mask(h, v).intersects(subset)) present.push_back(v);
        if (present.size() >= 2 && present.size() > bestVals.size()) {
            bestHole = h;
            bestVals = std::move(present);
        }
    }
    if (bestHole == space.hole_count())
        throw ModelError("cannot split subfamily: no hole with two active values");
    FamilyIndexSet left(subset.universe_size());
    for (std::size_t k = 0; k < (bestVals.size() + 1) / 2; ++k)
        left.unite_with(space.value_mask(bestHole, bestVals[k]));
    left.intersect_with(subset);
    return left;
}

struct SplitCandidate {
    bool found = false;
    std::size_t exclusion = 0;
    FamilyIndexSet set;
};

inline void consider(SplitCandidate& best, const FamilyIndexSet& chosen,
                     const FamilyIndexSet& subset) {
    FamilyIndexSet k = chosen & subset;
    if (k.empty() || k.count() == subset.count()) return;
    std::size_t excl = subset.count() - k.count();
    if (!best.found || excl > best.exclusion) {
        best.found = true;
        best.exclusion = excl;
        best.set = std::move(k);
    }
}

} // namespace detail

/// Optimistic split from the game policy: take the consistency set when it is
/// a proper nonempty subset; otherwise separate a distinguishing pair by
/// keeping the chosen identifier class of the decision point that excludes
/// the most members; hole bisection as a last resort.
inline FamilyIndexSet create_split(const GameAbstraction& g, const GamePolicy& policy,
                                   ConsistencyScope scope) {
    const FamilyIndexSet& subset = g.restriction.subset;
    if (subset.count() < 2)
        throw ModelError("cannot split a singleton subfamily");
    FamilyIndexSet consistent = consistent_identifiers(g, policy, scope);
    if (!consistent.empty() && consistent.count() < subset.count()) return consistent;
    const QuotientMdp& q = *g.restriction.quotient;
    detail::SplitCandidate best;
    std::vector<char> inScope;
    if (scope == ConsistencyScope::Reachable) inScope = reachable_decision_points(g, policy);
    for (std::uint32_t d = 0; d < g.player2_count(); ++d) {
        if (scope == ConsistencyScope::Reachable && !inScope[d]) continue;
        if (g.classOfChoice[d].empty()) continue;
        auto [s, a] = g.decisionPoint[d];
        detail::consider(best, q.actions[s][a].classes[policy.classChoice[d]].members, subset);
    }
    if (best.found) return best.set;
    return detail::hole_median_split(q.space, subset);
}

/// Pessimistic split from the quotient's maximizing policy, evaluated on the
/// policy's reachable fragment.
inline FamilyIndexSet create_split(const Restriction& r, const QuotientPolicy& policy) {
    const FamilyIndexSet& subset = r.subset;
    if (subset.count() < 2)
        throw ModelError("cannot split a singleton subfamily");
    FamilyIndexSet consistent = consistent_identifiers(r, policy);
    if (!consistent.empty() && consistent.count() < subset.count()) return consistent;
    const QuotientMdp& q = *r.quotient;
    StateMask reach = reachable_fragment(r, policy);
    detail::SplitCandidate best;
    for (std::uint32_t s = 0; s < q.state_count(); ++s) {
        if (!reach[s]) continue;
        const auto& c = policy.choice[s];
        detail::consider(best, q.actions[s][c.action].classes[c.cls].members, subset);
    }
    if (best.found) return best.set;
    return detail::hole_median_split(q.space, subset);
}

namespace detail {

struct BuildContext {
    const QuotientMdp* quotient = nullptr;
    SynthesisConfig cfg;
    Counters counters;
    std::chrono::steady_clock::time_point deadline;
    bool hasDeadline = false;
    std::atomic<bool> aborted{false};

    bool out_of_budget() const {
        if (cfg.iterationCap && counters.iterations.load() >= cfg.iterationCap) return true;
        if (hasDeadline && std::chrono::steady_clock::now() >= deadline) return true;
        return false;
    }
};

struct ProcessResult {
    bool split = false;
    NodeKind kind = NodeKind::UnknownLeaf;
    LeafPolicyPtr policy;
    FamilyIndexSet leftSubset;
};

inline LeafPolicyPtr make_leaf_policy(const Restriction& r, const Policy& base) {
    auto lp = std::make_shared<LeafPolicy>();
    lp->fragment = reachable_fragment_base(r, base);
    lp->base = canonicalize_policy(base, lp->fragment);
    return lp;
}

inline Policy base_projection(const QuotientPolicy& qp) {
    Policy p;
    p.choice.reserve(qp.choice.size());
    for (const auto& c : qp.choice) p.choice.push_back(c.action);
    return p;
}

inline ProcessResult process_subfamily(BuildContext& ctx, const FamilyIndexSet& subset) {
    ProcessResult out;
    if (ctx.out_of_budget()) {
        ctx.aborted = true;
        out.kind = NodeKind::UnknownLeaf;
        return out;
    }
    Restriction r = restrict(*ctx.quotient, subset);
    if (subset.count() == 1) {
        // the quotient of a singleton is the member itself; one solve decides
        UnsatOutcome u = test_unsat(r, ctx.cfg, &ctx.counters);
        if (u.unsat) { out.kind = NodeKind::UnsatLeaf; return out; }
        out.kind = NodeKind::PolicyLeaf;
        out.policy = make_leaf_policy(r, base_projection(u.maximizer));
        return out;
    }
    RobustOutcome robust = ctx.cfg.method == Method::Game
                               ? find_robust_game(r, ctx.cfg, &ctx.counters)
                               : find_robust_random(r, ctx.cfg, &ctx.counters);
    if (robust.sat) {
        out.kind = NodeKind::PolicyLeaf;
        out.policy = make_leaf_policy(r, robust.basePolicy);
        return out;
    }
    UnsatOutcome unsat = test_unsat(r, ctx.cfg, &ctx.counters);
    if (unsat.unsat) {
        out.kind = NodeKind::UnsatLeaf;
        return out;
    }
    out.split = true;
    if (ctx.cfg.method == Method::Game && ctx.cfg.split != SplitStrategy::Pessimistic) {
        ConsistencyScope scope = ctx.cfg.split == SplitStrategy::OptimisticUnreachable
                                     ? ConsistencyScope::All
                                     : ConsistencyScope::Reachable;
        out.leftSubset = create_split(*robust.game, robust.gamePolicy, scope);
    } else {
        out.leftSubset = create_split(r, unsat.maximizer);
        if (ctx.cfg.checkInvariants) {
            // when the consistency branch fired, the maximizer's base
            // projection must be robust for the split-off subfamily
            FamilyIndexSet consistent = consistent_identifiers(r, unsat.maximizer);
            if (!consistent.empty() && consistent == out.leftSubset &&
                meets_threshold(unsat.value, ctx.cfg.lambda)) {
                SynthesisConfig quiet = ctx.cfg;
                Restriction sub = restrict(*ctx.quotient, out.leftSubset);
                auto [ok, value] = test_policy_robust(sub, base_projection(unsat.maximizer), quiet);
                if (!ok)
                    throw std::logic_error("pessimistic consistency split is not robust (value " +
                                           std::to_string(value) + ")");
            }
        }
    }
    if (out.leftSubset.empty() || out.leftSubset.count() >= subset.count())
        throw std::logic_error("split did not produce a proper nonempty subfamily");
    return out;
}

} // namespace detail

struct SynthesisResult {
    PolicyTree tree;
    SynthesisStats stats;
};

/// Recursive policy-tree construction: find a robust policy for the node's
/// subfamily, otherwise prove it unsatisfiable, otherwise split and recurse.
/// Sibling subtrees may be processed concurrently (cfg.jobs).
inline SynthesisResult build_tree(const QuotientMdp& quotient, const FamilyIndexSet& indices,
                                  const SynthesisConfig& cfgIn) {
    if (indices.empty()) throw ModelError("cannot synthesize for an empty family");
    SynthesisConfig cfg = cfgIn;
    if (cfg.method == Method::Random) cfg.split = SplitStrategy::Pessimistic;
    auto started = std::chrono::steady_clock::now();

    detail::BuildContext ctx;
    ctx.quotient = &quotient;
    ctx.cfg = cfg;
    if (cfg.timeLimitSeconds > 0) {
        ctx.hasDeadline = true;
        ctx.deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double>(cfg.timeLimitSeconds));
    }

    PolicyTree tree;
    tree.quotient = &quotient;
    tree.lambda = cfg.lambda;
    std::mutex arenaMutex;
    tree.nodes.push_back(TreeNode{indices, NodeKind::UnknownLeaf, -1, -1, nullptr});
    tree.root = 0;

    std::vector<int> tasks{0};
    std::mutex taskMutex;
    std::condition_variable taskCv;
    std::size_t active = 0;
    std::exception_ptr failure;

    auto runTask = [&](int nodeId) {
        FamilyIndexSet subset;
        {
            std::lock_guard<std::mutex> lock(arenaMutex);
            subset = tree.nodes[nodeId].indexSet;
        }
        detail::ProcessResult res = detail::process_subfamily(ctx, subset);
        std::vector<int> children;
        {
            std::lock_guard<std::mutex> lock(arenaMutex);
            if (!res.split) {
                tree.nodes[nodeId].kind = res.kind;
                tree.nodes[nodeId].policy = res.policy;
            } else {
                FamilyIndexSet rightSet = subset - res.leftSubset;
                int left = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{std::move(res.leftSubset), NodeKind::UnknownLeaf,
                                              -1, -1, nullptr});
                int right = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{std::move(rightSet), NodeKind::UnknownLeaf,
                                              -1, -1, nullptr});
                tree.nodes[nodeId].kind = NodeKind::Inner;
                tree.nodes[nodeId].left = left;
                tree.nodes[nodeId].right = right;
                children = {left, right};
            }
        }
        return children;
    };

    if (cfg.jobs <= 1) {
        while (!tasks.empty()) {
            int id = tasks.back();
            tasks.pop_back();
            auto children = runTask(id);
            // push right first so the left subtree is built first
            for (auto it = children.rbegin(); it != children.rend(); ++it) tasks.push_back(*it);
        }
    } else {
        auto worker = [&]() {
            std::unique_lock<std::mutex> lock(taskMutex);
            while (true) {
                taskCv.wait(lock, [&] { return !tasks.empty() || (active == 0) || failure; });
                if (failure) return;
                if (tasks.empty()) {
                    if (active == 0) { taskCv.notify_all(); return; }
                    continue;
                }
                int id = tasks.back();
                tasks.pop_back();
                ++active;
                lock.unlock();
                std::vector<int> children;
                try {
                    children = runTask(id);
                } catch (...) {
                    lock.lock();
                    failure = std::current_exception();
                    --active;
                    taskCv.notify_all();
                    return;
                }
                lock.lock();
                for (auto it = children.rbegin(); it != children.rend(); ++it) tasks.push_back(*it);
                --active;
                taskCv.notify_all();
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < cfg.jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    tree.renumber_depth_first();

    SynthesisResult result;
    result.tree = std::move(tree);
    SynthesisStats& st = result.stats;
    st.iterations = ctx.counters.iterations.load();
    st.gameSolves = ctx.counters.gameSolves.load();
    st.quotientSolves = ctx.counters.quotientSolves.load();
    st.robustnessChecks = ctx.counters.robustnessChecks.load();
    st.nodes = result.tree.nodes.size();
    st.leaves = result.tree.leaf_count();
    st.policyLeaves = result.tree.policy_leaf_count();
    st.unsatLeaves = result.tree.unsat_leaf_count();
    st.unknownLeaves = result.tree.unknown_leaf_count();
    st.splits = result.tree.inner_count();
    st.distinctPolicies = result.tree.distinct_policy_count();
    st.aborted = ctx.aborted.load();
    st.synthesisSeconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

// --- baselines ---------------------------------------------------------------

struct MemberVerdict {
    double value = 0.0;
    bool sat = false;
    Policy policy; // empty when policies are not kept
};

struct BaselineResult {
    std::vector<MemberVerdict> verdicts;        // by family index
    std::size_t iterations = 0;                 // MDP model-checking calls
    std::size_t totalStates = 0;                // all-in-one union size
    double seconds = 0.0;
};

/// Ground-truth oracle: instantiate and solve every member individually.
inline BaselineResult baseline_one_by_one(const SketchProgram& program, const Specification& spec,
                                          const BuildOptions& opts = {}, bool keepPolicies = true,
                                          const SolveOptions& solver = {}) {
    auto started = std::chrono::steady_clock::now();
    HoleSpace space(program.holes, opts.familyCap);
    BaselineResult out;
    out.verdicts.resize(space.size());
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        ExplicitMdp member = instantiate(program, space.assignment(i), opts);
        member.targets = eval_state_predicate(program, member.stateValuations, spec.target);
        NumericMdp numeric = to_numeric(member);
        SolveResult res = mdp_opt_reach(numeric, Direction::Max, solver);
        MemberVerdict v;
        v.value = res.value;
        v.sat = meets_threshold(res.value, spec.lambda);
        if (keepPolicies) v.policy = res.policy;
        out.verdicts[i] = std::move(v);
        ++out.iterations;
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

/// Disjoint-union baseline: one fresh initial state with one action per
/// member, a single maximal-reachability solve, per-member values read at
/// the members' initial copies.
inline BaselineResult baseline_all_in_one(const SketchProgram& program, const Specification& spec,
                                          const BuildOptions& opts = {},
                                          const SolveOptions& solver = {}) {
    auto started = std::chrono::steady_clock::now();
    HoleSpace space(program.holes, opts.familyCap);
    NumericMdp unionMdp;
    std::vector<std::uint32_t> initials(space.size(), 0);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> blocks; // (offset, size)
    std::size_t offset = 0;
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        ExplicitMdp member = instantiate(program, space.assignment(i), opts);
        member.targets = eval_state_predicate(program, member.stateValuations, spec.target);
        if (offset + member.state_count() + 1 > opts.stateCap)
            throw ResourceLimitError("all-in-one union exceeds the state cap of " +
                                     std::to_string(opts.stateCap) + " states");
        blocks.emplace_back(static_cast<std::uint32_t>(offset),
                            static_cast<std::uint32_t>(member.state_count()));
        initials[i] = static_cast<std::uint32_t>(offset + member.initial);
        unionMdp.choices.resize(offset + member.state_count());
        unionMdp.targets.resize(offset + member.state_count(), 0);
        for (std::size_t s = 0; s < member.state_count(); ++s) {
            unionMdp.targets[offset + s] = member.targets[s];
            for (const auto& a : member.actions[s]) {
                NumericChoice c;
                c.row.reserve(a.row.size());
                for (const auto& e : a.row)
                    c.row.emplace_back(static_cast<std::uint32_t>(offset + e.state),
                                       e.prob.to_double());
                unionMdp.choices[offset + s].push_back(std::move(c));
            }
        }
        offset += member.state_count();
    }
    std::uint32_t dummy = static_cast<std::uint32_t>(offset);
    unionMdp.choices.resize(offset + 1);
    unionMdp.targets.resize(offset + 1, 0);
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        NumericChoice c;
        c.row.emplace_back(initials[i], 1.0);
        unionMdp.choices[dummy].push_back(std::move(c));
    }
    unionMdp.initial = dummy;

    SolveResult res = mdp_opt_reach(unionMdp, Direction::Max, solver);
    BaselineResult out;
    out.iterations = 1;
    out.totalStates = offset + 1;
    out.verdicts.resize(space.size());
    for (std::uint64_t i = 0; i < space.size(); ++i) {
        MemberVerdict v;
        v.value = res.values[initials[i]];
        v.sat = meets_threshold(v.value, spec.lambda);
        auto [blockOffset, blockSize] = blocks[i];
        v.policy.choice.assign(res.policy.choice.begin() + blockOffset,
                               res.policy.choice.begin() + blockOffset + blockSize);
        out.verdicts[i] = std::move(v);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

} // namespace famtree
