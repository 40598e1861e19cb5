#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "famtree/mdp.hpp"
#include "famtree/quotient.hpp"
#include "famtree/sketch.hpp"

namespace famtree {

struct BuildOptions {
    std::size_t stateCap = 1'000'000;
    std::uint64_t familyCap = (1ULL << 32);
};

namespace detail {

struct ValuationHash {
    std::size_t operator()(const std::vector<std::int64_t>& v) const {
        std::size_t h = 0xcbf29ce484222325ULL;
        for (auto x : v) {
            h ^= static_cast<std::size_t>(x);
            h *= 0x100000001b3ULL;
        }
        return h;
    }
};

/// One action instance at a state: either a single unlabeled command or a
/// synchronized combination of same-label commands, one per participating
/// module.
struct ActionTemplate {
    int labelId = -1;
    std::vector<std::uint32_t> commands; // global command indices
    std::uint32_t nameId = 0;
};

enum class Enabled { None, All, Mixed };

struct EnabledSet {
    Enabled kind = Enabled::None;
    FamilyIndexSet set; // populated only for Mixed
};

class SketchContext {
public:
    SketchContext(const SketchProgram& program, const BuildOptions& opts)
        : prog_(program), space_(program.holes, opts.familyCap) {
        guardHoles_.resize(prog_.commands.size());
        for (std::size_t c = 0; c < prog_.commands.size(); ++c) {
            std::unordered_set<std::uint32_t> hs;
            collect_referenced_holes(prog_, prog_.commands[c].guard, hs);
            guardHoles_[c].assign(hs.begin(), hs.end());
            std::sort(guardHoles_[c].begin(), guardHoles_[c].end());
        }
        // action name table: one name per label, one per unlabeled command
        unlabeledName_.resize(prog_.commands.size(), UINT32_MAX);
        for (const auto& label : prog_.actionLabels) names_.push_back(label);
        for (std::size_t m = 0; m < prog_.modules.size(); ++m) {
            std::size_t j = 0;
            for (auto ci : prog_.modules[m].commands) {
                if (prog_.commands[ci].labelId < 0) {
                    unlabeledName_[ci] = static_cast<std::uint32_t>(names_.size());
                    names_.push_back(prog_.modules[m].name + "." + std::to_string(j));
                }
                ++j;
            }
        }
        selfLoopName_ = static_cast<std::uint32_t>(names_.size());
        names_.push_back("selfloop");
        // participating modules per label, with their label-commands
        labelModules_.resize(prog_.actionLabels.size());
        for (std::size_t m = 0; m < prog_.modules.size(); ++m) {
            for (std::size_t l = 0; l < prog_.actionLabels.size(); ++l) {
                std::vector<std::uint32_t> cmds;
                for (auto ci : prog_.modules[m].commands)
                    if (prog_.commands[ci].labelId == static_cast<int>(l)) cmds.push_back(ci);
                if (!cmds.empty()) labelModules_[l].push_back(std::move(cmds));
            }
        }
    }

    const SketchProgram& program() const { return prog_; }
    const HoleSpace& space() const { return space_; }
    const std::vector<std::string>& action_names() const { return names_; }
    std::uint32_t self_loop_name() const { return selfLoopName_; }

    const std::vector<std::uint32_t>& guard_holes(std::uint32_t cmd) const {
        return guardHoles_[cmd];
    }

    std::uint32_t action_name_id(const ActionTemplate& t) const {
        if (t.labelId >= 0) return static_cast<std::uint32_t>(t.labelId);
        return unlabeledName_[t.commands[0]];
    }

    /// Enumerates assignments over a subset of holes; callback receives a
    /// scratch full-width hole-value vector with those positions filled.
    template <typename F>
    void for_each_projection(const std::vector<std::uint32_t>& holes, F&& fn) const {
        std::vector<std::int64_t> values(prog_.holes.size(), 0);
        if (holes.empty()) {
            fn(values, std::size_t{0});
            return;
        }
        std::vector<std::size_t> digit(holes.size(), 0);
        std::size_t projIdx = 0;
        while (true) {
            for (std::size_t k = 0; k < holes.size(); ++k)
                values[holes[k]] = prog_.holes[holes[k]].values[digit[k]];
            fn(values, projIdx);
            ++projIdx;
            std::size_t k = holes.size();
            while (k-- > 0) {
                if (++digit[k] < prog_.holes[holes[k]].values.size()) break;
                digit[k] = 0;
                if (k == 0) return;
            }
        }
    }

    std::size_t projection_count(const std::vector<std::uint32_t>& holes) const {
        std::size_t n = 1;
        for (auto h : holes) n *= prog_.holes[h].values.size();
        return n;
    }

    /// Projection index of a full family index, consistent with
    /// for_each_projection's enumeration order (last hole fastest).
    std::size_t projection_of(std::uint64_t familyIndex,
                              const std::vector<std::uint32_t>& holes) const {
        std::size_t proj = 0;
        for (auto h : holes)
            proj = proj * prog_.holes[h].values.size() + space_.digit(familyIndex, h);
        return proj;
    }

    EnabledSet guard_enabled(std::uint32_t cmd, std::span<const std::int64_t> valuation) const {
        const Command& command = prog_.commands[cmd];
        const auto& holes = guardHoles_[cmd];
        EnabledSet result;
        if (holes.empty()) {
            EvalContext ctx = prog_.context(valuation, {});
            result.kind = eval_int(command.guard, ctx) ? Enabled::All : Enabled::None;
            return result;
        }
        FamilyIndexSet set(space_.size());
        std::size_t trueCount = 0, total = 0;
        for_each_projection(holes, [&](const std::vector<std::int64_t>& hv, std::size_t) {
            ++total;
            EvalContext ctx = prog_.context(valuation, hv);
            if (!eval_int(command.guard, ctx)) return;
            ++trueCount;
            FamilyIndexSet rect = space_.value_mask(holes[0], space_.domain_position(holes[0], hv[holes[0]]));
            for (std::size_t k = 1; k < holes.size(); ++k)
                rect.intersect_with(space_.value_mask(holes[k], space_.domain_position(holes[k], hv[holes[k]])));
            set.unite_with(rect);
        });
        if (trueCount == 0) { result.kind = Enabled::None; return result; }
        if (trueCount == total) { result.kind = Enabled::All; return result; }
        result.kind = Enabled::Mixed;
        result.set = std::move(set);
        return result;
    }

    /// Candidate action instances at a valuation, in deterministic order:
    /// unlabeled commands by (module, declaration) order, then labels in
    /// declaration order with synchronized combinations in lexicographic
    /// command order.
    template <typename EnabledFn, typename EmitFn>
    void enumerate_instances(EnabledFn&& enabledOf, EmitFn&& emit) const {
        for (const auto& mod : prog_.modules) {
            for (auto ci : mod.commands) {
                if (prog_.commands[ci].labelId >= 0) continue;
                ActionTemplate t;
                t.labelId = -1;
                t.commands = {ci};
                t.nameId = unlabeledName_[ci];
                emit(t, enabledOf(std::vector<std::uint32_t>{ci}));
            }
        }
        for (std::size_t l = 0; l < prog_.actionLabels.size(); ++l) {
            const auto& mods = labelModules_[l];
            if (mods.empty()) continue;
            std::vector<std::size_t> pick(mods.size(), 0);
            while (true) {
                ActionTemplate t;
                t.labelId = static_cast<int>(l);
                for (std::size_t m = 0; m < mods.size(); ++m)
                    t.commands.push_back(mods[m][pick[m]]);
                t.nameId = static_cast<std::uint32_t>(l);
                emit(t, enabledOf(t.commands));
                std::size_t m = mods.size();
                bool done = true;
                while (m-- > 0) {
                    if (++pick[m] < mods[m].size()) { done = false; break; }
                    pick[m] = 0;
                }
                if (done) break;
            }
        }
    }

private:
    const SketchProgram& prog_;
    HoleSpace space_;
    std::vector<std::vector<std::uint32_t>> guardHoles_;
    std::vector<std::uint32_t> unlabeledName_;
    std::uint32_t selfLoopName_ = 0;
    std::vector<std::string> names_;
    std::vector<std::vector<std::vector<std::uint32_t>>> labelModules_; // per label, per module
};

/// State registry interning valuations in BFS discovery order.
class StateRegistry {
public:
    explicit StateRegistry(std::size_t cap) : cap_(cap) {}

    std::uint32_t intern(const std::vector<std::int64_t>& valuation, bool& isNew) {
        auto it = index_.find(valuation);
        if (it != index_.end()) { isNew = false; return it->second; }
        if (valuations_.size() >= cap_)
            throw ResourceLimitError("state cap exceeded (" + std::to_string(cap_) + " states)");
        std::uint32_t id = static_cast<std::uint32_t>(valuations_.size());
        valuations_.push_back(valuation);
        index_.emplace(valuation, id);
        isNew = true;
        return id;
    }

    const std::vector<std::vector<std::int64_t>>& valuations() const { return valuations_; }

private:
    std::size_t cap_;
    std::vector<std::vector<std::int64_t>> valuations_;
    std::unordered_map<std::vector<std::int64_t>, std::uint32_t, ValuationHash> index_;
};

class ComboEvaluator {
public:
    ComboEvaluator(const SketchProgram& prog, StateRegistry& registry)
        : prog_(prog), registry_(registry) {}

    /// Evaluates the distribution of one action instance at a valuation for
    /// fixed hole values. Interns successor states; validates probabilities
    /// and variable bounds.
    SparseRow evaluate(const std::vector<std::int64_t>& valuation,
                       std::span<const std::int64_t> holeValues,
                       const std::vector<std::uint32_t>& commands,
                       std::deque<std::uint32_t>* frontier) {
        EvalContext ctx = prog_.context(valuation, holeValues);
        // branch probabilities per command, validated to sum to one
        perCommand_.clear();
        for (auto ci : commands) {
            const Command& cmd = prog_.commands[ci];
            std::vector<Rational> probs;
            Rational sum(0);
            for (const auto& br : cmd.branches) {
                Rational p = eval_rat(br.probability, ctx);
                if (p < Rational(0) || p > Rational(1))
                    throw ModelError("probability outside [0,1] in command at line " +
                                     std::to_string(cmd.line));
                probs.push_back(p);
                sum += p;
            }
            if (!(sum == Rational(1)))
                throw ModelError("branch probabilities sum to " + sum.to_string() +
                                 " (expected 1) in command at line " + std::to_string(cmd.line));
            perCommand_.push_back(std::move(probs));
        }
        SparseRow row;
        std::vector<std::size_t> pick(commands.size(), 0);
        std::vector<std::int64_t> succ;
        while (true) {
            Rational p(1);
            for (std::size_t k = 0; k < commands.size(); ++k)
                p *= perCommand_[k][pick[k]];
            if (!p.is_zero()) {
                succ = valuation;
                for (std::size_t k = 0; k < commands.size(); ++k) {
                    const Command& cmd = prog_.commands[commands[k]];
                    for (const auto& up : cmd.branches[pick[k]].updates) {
                        std::int64_t v = eval_int(up.value, ctx);
                        const Variable& var = prog_.variables[up.varIndex];
                        if (v < var.lo || v > var.hi)
                            throw ModelError("assignment " + var.name + "'=" + std::to_string(v) +
                                             " outside bounds [" + std::to_string(var.lo) + ".." +
                                             std::to_string(var.hi) + "] in command at line " +
                                             std::to_string(cmd.line));
                        succ[up.varIndex] = v;
                    }
                }
                bool isNew = false;
                std::uint32_t id = registry_.intern(succ, isNew);
                if (isNew && frontier) frontier->push_back(id);
                row.push_back(DistEntry{id, p});
            }
            std::size_t k = commands.size();
            bool done = true;
            while (k-- > 0) {
                if (++pick[k] < perCommand_[k].size()) { done = false; break; }
                pick[k] = 0;
            }
            if (done) break;
        }
        normalize_row(row);
        if (!(row_sum(row) == Rational(1)))
            throw ModelError("internal: combined distribution does not sum to 1");
        return row;
    }

private:
    const SketchProgram& prog_;
    StateRegistry& registry_;
    std::vector<std::vector<Rational>> perCommand_;
};

} // namespace detail

/// Builds one family member as an explicit MDP by forward exploration from
/// the initial valuation.
inline ExplicitMdp instantiate(const SketchProgram& program, const HoleAssignment& assignment,
                               const BuildOptions& opts = {}) {
    detail::SketchContext ctx(program, opts);
    if (assignment.values.size() != program.holes.size())
        throw ModelError("incomplete hole assignment");
    detail::StateRegistry registry(opts.stateCap);
    detail::ComboEvaluator eval(program, registry);
    std::deque<std::uint32_t> frontier;
    bool isNew = false;
    registry.intern(program.initial_valuation(), isNew);
    frontier.push_back(0);

    ExplicitMdp mdp;
    mdp.initial = 0;
    mdp.actionNames = ctx.action_names();
    mdp.variableNames.reserve(program.variables.size());
    for (const auto& v : program.variables) mdp.variableNames.push_back(v.name);

    std::size_t deadlocks = 0;
    while (!frontier.empty()) {
        std::uint32_t s = frontier.front();
        frontier.pop_front();
        if (mdp.actions.size() <= s) mdp.actions.resize(s + 1);
        const auto valuation = registry.valuations()[s];
        std::vector<ExplicitAction> acts;
        ctx.enumerate_instances(
            [&](const std::vector<std::uint32_t>& commands) {
                // enabled under this member iff every guard holds
                for (auto ci : commands) {
                    EvalContext ec = program.context(valuation, assignment.values);
                    if (!eval_int(program.commands[ci].guard, ec)) return false;
                }
                return true;
            },
            [&](const detail::ActionTemplate& t, bool enabled) {
                if (!enabled) return;
                ExplicitAction a;
                a.nameId = t.nameId;
                a.row = eval.evaluate(valuation, assignment.values, t.commands, &frontier);
                acts.push_back(std::move(a));
            });
        if (acts.empty()) {
            acts.push_back(ExplicitAction{ctx.self_loop_name(), SparseRow{{s, Rational(1)}}});
            ++deadlocks;
        }
        mdp.actions[s] = std::move(acts);
    }
    mdp.actions.resize(registry.valuations().size());
    mdp.stateValuations = registry.valuations();
    if (deadlocks > 0)
        mdp.warnings.push_back(std::to_string(deadlocks) +
                               " deadlocked state(s) received an implicit self-loop");
    return mdp;
}

/// Builds the quotient MDP: shared state space explored across all members,
/// with identifier classes computed by exact grouping of distributions.
/// Throws ModelError if members disagree on action availability.
inline QuotientMdp build_quotient(const SketchProgram& program, const BuildOptions& opts = {}) {
    detail::SketchContext ctx(program, opts);
    const HoleSpace& space = ctx.space();
    detail::StateRegistry registry(opts.stateCap);
    detail::ComboEvaluator eval(program, registry);
    std::deque<std::uint32_t> frontier;
    bool isNew = false;
    registry.intern(program.initial_valuation(), isNew);
    frontier.push_back(0);

    QuotientMdp q;
    q.initial = 0;
    q.actionNames = ctx.action_names();
    q.space = space;
    q.variableNames.reserve(program.variables.size());
    for (const auto& v : program.variables) q.variableNames.push_back(v.name);

    std::size_t deadlocks = 0;
    std::unordered_map<std::size_t, std::vector<std::pair<SparseRow, std::uint32_t>>> buckets;
    while (!frontier.empty()) {
        std::uint32_t s = frontier.front();
        frontier.pop_front();
        if (q.actions.size() <= s) q.actions.resize(s + 1);
        const auto valuation = registry.valuations()[s];
        std::vector<QuotientAction> acts;
        ctx.enumerate_instances(
            [&](const std::vector<std::uint32_t>& commands) {
                detail::EnabledSet combined;
                combined.kind = detail::Enabled::All;
                for (auto ci : commands) {
                    detail::EnabledSet es = ctx.guard_enabled(ci, valuation);
                    if (es.kind == detail::Enabled::None) { combined.kind = detail::Enabled::None; break; }
                    if (es.kind == detail::Enabled::All) continue;
                    if (combined.kind == detail::Enabled::All) {
                        combined.kind = detail::Enabled::Mixed;
                        combined.set = std::move(es.set);
                    } else {
                        combined.set.intersect_with(es.set);
                    }
                }
                if (combined.kind == detail::Enabled::Mixed) {
                    if (combined.set.empty()) combined.kind = detail::Enabled::None;
                    else if (combined.set.count() == space.size()) combined.kind = detail::Enabled::All;
                }
                return combined;
            },
            [&](const detail::ActionTemplate& t, detail::EnabledSet enabled) {
                if (enabled.kind == detail::Enabled::None) return;
                if (enabled.kind == detail::Enabled::Mixed) {
                    std::string desc = q.actionNames[t.nameId];
                    throw ModelError(
                        "family members disagree on the availability of action '" + desc +
                        "' (enabled for " + std::to_string(enabled.set.count()) + " of " +
                        std::to_string(space.size()) + " members); families must share "
                        "action availability in every state");
                }
                // holes the distribution depends on
                std::vector<std::uint32_t> relevant;
                {
                    std::unordered_set<std::uint32_t> hs;
                    for (auto ci : t.commands)
                        for (auto h : program.commandHoles[ci]) hs.insert(h);
                    relevant.assign(hs.begin(), hs.end());
                    std::sort(relevant.begin(), relevant.end());
                }
                QuotientAction qa;
                qa.nameId = t.nameId;
                if (relevant.empty()) {
                    std::vector<std::int64_t> none(program.holes.size(), 0);
                    QuotientClass cls;
                    cls.row = eval.evaluate(valuation, none, t.commands, &frontier);
                    cls.members = space.full_set();
                    qa.classes.push_back(std::move(cls));
                } else {
                    std::size_t projCount = ctx.projection_count(relevant);
                    std::vector<std::uint32_t> projClass(projCount, 0);
                    buckets.clear();
                    ctx.for_each_projection(relevant, [&](const std::vector<std::int64_t>& hv,
                                                          std::size_t projIdx) {
                        SparseRow row = eval.evaluate(valuation, hv, t.commands, &frontier);
                        std::size_t h = row_hash(row);
                        auto& bucket = buckets[h];
                        for (auto& [r, clsIdx] : bucket) {
                            if (r == row) { projClass[projIdx] = clsIdx; return; }
                        }
                        std::uint32_t clsIdx = static_cast<std::uint32_t>(qa.classes.size());
                        QuotientClass cls;
                        cls.row = row;
                        cls.members = FamilyIndexSet(space.size());
                        qa.classes.push_back(std::move(cls));
                        bucket.emplace_back(std::move(row), clsIdx);
                        projClass[projIdx] = clsIdx;
                    });
                    for (std::uint64_t i = 0; i < space.size(); ++i)
                        qa.classes[projClass[ctx.projection_of(i, relevant)]].members.insert(i);
                }
                acts.push_back(std::move(qa));
            });
        if (acts.empty()) {
            QuotientAction qa;
            qa.nameId = ctx.self_loop_name();
            qa.classes.push_back(QuotientClass{space.full_set(), SparseRow{{s, Rational(1)}}});
            acts.push_back(std::move(qa));
            ++deadlocks;
        }
        q.actions[s] = std::move(acts);
    }
    q.actions.resize(registry.valuations().size());
    q.stateValuations = registry.valuations();
    if (deadlocks > 0)
        q.warnings.push_back(std::to_string(deadlocks) +
                             " deadlocked state(s) received an implicit self-loop");
    return q;
}

/// Evaluates a boolean state predicate over explored state valuations.
inline StateMask eval_state_predicate(const SketchProgram& program,
                                      const std::vector<std::vector<std::int64_t>>& valuations,
                                      const Expr& predicate) {
    StateMask mask(valuations.size(), 0);
    for (std::size_t s = 0; s < valuations.size(); ++s) {
        EvalContext ctx = program.context(valuations[s], {});
        mask[s] = eval_int(predicate, ctx) ? 1 : 0;
    }
    return mask;
}

} // namespace famtree
