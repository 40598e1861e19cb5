#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "famtree/postprocess.hpp"
#include "famtree/synthesis.hpp"
#include "famtree/tree_io.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace famtree;

namespace {

SynthesisConfig config_for(double lambda, Method method = Method::Game,
                           SplitStrategy split = SplitStrategy::OptimisticUnreachable) {
    SynthesisConfig cfg;
    cfg.lambda = lambda;
    cfg.method = method;
    cfg.split = split;
    cfg.checkInvariants = true;
    return cfg;
}

/// Library result cross-checked against per-member ground truth.
void check_against_members(const PolicyTree& tree, const std::vector<bool>& memberSat,
                           double lambda) {
    const QuotientMdp& q = *tree.quotient;
    for (std::uint64_t i = 0; i < q.family_size(); ++i) {
        int leaf = tree.leaf_of_member(i);
        NodeKind kind = tree.node(leaf).kind;
        INFO("member " << i);
        if (memberSat[i]) {
            REQUIRE(kind == NodeKind::PolicyLeaf);
            NumericMdp member = to_numeric(member_from_quotient(q, i));
            double v = oracles::chain_value_linear(member, tree.node(leaf).policy->base);
            REQUIRE(v >= lambda - 1e-6);
        } else {
            REQUIRE(kind == NodeKind::UnsatLeaf);
        }
    }
}

} // namespace

TEST_CASE("two-member family: one policy leaf at 0.5, one unsat leaf at 0.9") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    SECTION("threshold below the game value yields a single robust policy") {
        auto res = build_tree(q, q.space.full_set(), config_for(0.5));
        REQUIRE(res.tree.nodes.size() == 1);
        REQUIRE(res.tree.node(0).kind == NodeKind::PolicyLeaf);
        // the robust policy plays action a at the decision state
        REQUIRE(q.actionNames[q.actions[0][res.tree.node(0).policy->base.choice[0]].nameId] ==
                "a");
        REQUIRE(res.stats.policyLeaves == 1);
        REQUIRE(res.stats.leaves == 1);
    }
    SECTION("threshold above the quotient maximum yields a single unsat leaf") {
        auto res = build_tree(q, q.space.full_set(), config_for(0.9));
        REQUIRE(res.tree.nodes.size() == 1);
        REQUIRE(res.tree.node(0).kind == NodeKind::UnsatLeaf);
    }
}

TEST_CASE("find_robust on singleton families mirrors the member check") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    // member 2's maximum is 0.7 (via b), member 1's is 0.8 (via a)
    for (std::uint64_t member = 0; member < 2; ++member) {
        Restriction r = restrict(q, FamilyIndexSet::singleton(2, member));
        SynthesisConfig cfg = config_for(0.75);
        RobustOutcome out = find_robust_game(r, cfg);
        double memberMax =
            mdp_opt_reach(to_numeric(member_from_quotient(q, member)), Direction::Max).value;
        REQUIRE(out.sat == meets_threshold(memberMax, 0.75));
    }
}

TEST_CASE("test_unsat provides the maximizing quotient policy either way") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    Restriction r = restrict(q, q.space.full_set());
    SECTION("certifies unsatisfiability above the maximum") {
        UnsatOutcome u = test_unsat(r, config_for(0.9));
        REQUIRE(u.unsat);
        REQUIRE(u.value == Catch::Approx(0.8).margin(1e-6));
        // maximizer picks a with member 1's class
        REQUIRE(q.actionNames[q.actions[0][u.maximizer.choice[0].action].nameId] == "a");
        REQUIRE(q.actions[0][u.maximizer.choice[0].action]
                    .classes[u.maximizer.choice[0].cls]
                    .members.contains(0));
    }
    SECTION("below the maximum nothing can be deduced") {
        UnsatOutcome u = test_unsat(r, config_for(0.5));
        REQUIRE_FALSE(u.unsat);
        REQUIRE(u.value == Catch::Approx(0.8).margin(1e-6));
    }
    SECTION("all states target means never unsat") {
        QuotientMdp copy = q;
        for (auto& t : copy.targets) t = 1;
        UnsatOutcome u = test_unsat(restrict(copy, copy.space.full_set()), config_for(0.99));
        REQUIRE_FALSE(u.unsat);
    }
}

TEST_CASE("detour family at threshold one: policies cover all members") {
    fixtures::LoadedFamily f = fixtures::load_detour();
    const QuotientMdp& q = f.quotient;
    SECTION("splitting with unreachable states separates members 1 and 2") {
        auto res = build_tree(q, q.space.full_set(),
                              config_for(1.0, Method::Game, SplitStrategy::OptimisticUnreachable));
        REQUIRE(res.tree.leaf_count() <= 3);
        REQUIRE(res.tree.unsat_leaf_count() == 0);
        REQUIRE(res.tree.unknown_leaf_count() == 0);
        int leaf1 = res.tree.leaf_of_member(0);
        int leaf2 = res.tree.leaf_of_member(1);
        REQUIRE(leaf1 != leaf2);
        check_against_members(res.tree, {true, true, true}, 1.0);
    }
    SECTION("reachable-only splitting first tries the bad {1,2} vs {3} split") {
        auto res = build_tree(q, q.space.full_set(),
                              config_for(1.0, Method::Game, SplitStrategy::OptimisticReachable));
        const TreeNode& root = res.tree.node(res.tree.root);
        REQUIRE(root.kind == NodeKind::Inner);
        const FamilyIndexSet& left = res.tree.node(root.left).indexSet;
        REQUIRE(left.count() == 2);
        REQUIRE(left.contains(0));
        REQUIRE(left.contains(1));
        // the algorithm still recovers: all members end up with winning policies
        check_against_members(res.tree, {true, true, true}, 1.0);
    }
}

TEST_CASE("create_split on the detour game separates the conflicting members") {
    fixtures::LoadedFamily f = fixtures::load_detour();
    const QuotientMdp& q = f.quotient;
    Restriction r = restrict(q, q.space.full_set());
    SynthesisConfig cfg = config_for(1.0);
    RobustOutcome out = find_robust_game(r, cfg);
    REQUIRE_FALSE(out.sat);
    SECTION("scope all separates members 1 and 2") {
        FamilyIndexSet left = create_split(*out.game, out.gamePolicy, ConsistencyScope::All);
        REQUIRE_FALSE(left.empty());
        REQUIRE(left.count() < 3);
        REQUIRE(left.contains(0) != left.contains(1));
    }
    SECTION("scope reachable returns the consistency set {1,2}") {
        FamilyIndexSet left =
            create_split(*out.game, out.gamePolicy, ConsistencyScope::Reachable);
        REQUIRE(left.count() == 2);
        REQUIRE(left.contains(0));
        REQUIRE(left.contains(1));
    }
    SECTION("two-member subfamilies split into singletons") {
        FamilyIndexSet pair(3);
        pair.insert(0);
        pair.insert(1);
        Restriction sub = restrict(q, pair);
        RobustOutcome subOut = find_robust_game(sub, cfg);
        REQUIRE_FALSE(subOut.sat);
        FamilyIndexSet left = create_split(*subOut.game, subOut.gamePolicy, ConsistencyScope::All);
        REQUIRE(left.count() == 1);
    }
}

TEST_CASE("uniform-mixture method evaluates and verifies candidate policies") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    Restriction r = restrict(q, q.space.full_set());
    SECTION("mixture value under action a is the average of 0.8 and 0.6") {
        NumericMdp mix = to_numeric_uniform_mixture(r);
        SolveResult res = mdp_opt_reach(mix, Direction::Max);
        REQUIRE(res.value == Catch::Approx(0.7).margin(1e-9));
        REQUIRE(q.actionNames[q.actions[0][res.policy.choice[0]].nameId] == "a");
    }
    SECTION("accepted at 0.5 since the adversarial minimum is 0.6") {
        RobustOutcome out = find_robust_random(r, config_for(0.5, Method::Random));
        REQUIRE(out.sat);
        REQUIRE(q.actionNames[q.actions[0][out.basePolicy.choice[0]].nameId] == "a");
    }
    SECTION("rejected at 0.7 although the mixture value reaches 0.7") {
        RobustOutcome out = find_robust_random(r, config_for(0.7, Method::Random));
        REQUIRE_FALSE(out.sat);
    }
    SECTION("singleton families behave like plain member solving") {
        Restriction single = restrict(q, FamilyIndexSet::singleton(2, 0));
        RobustOutcome out = find_robust_random(single, config_for(0.75, Method::Random));
        REQUIRE(out.sat); // member 1 reaches 0.8
    }
}

TEST_CASE("robustness check: fix the base actions, adversarial classes remain") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    Restriction r = restrict(q, q.space.full_set());
    Policy alpha;
    alpha.choice.assign(q.state_count(), 0);
    auto [robust05, v] = test_policy_robust(r, alpha, config_for(0.5));
    REQUIRE(robust05);
    REQUIRE(v == Catch::Approx(0.6).margin(1e-9));
    auto [robust07, v2] = test_policy_robust(r, alpha, config_for(0.7));
    REQUIRE_FALSE(robust07);
}

TEST_CASE("robustness check on a singleton family is a chain check") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    const QuotientMdp& q = f.quotient;
    Restriction single = restrict(q, FamilyIndexSet::singleton(2, 1));
    Policy alpha;
    alpha.choice.assign(q.state_count(), 0);
    auto [ok, value] = test_policy_robust(single, alpha, config_for(0.5));
    // member 2 plays a: its chain reaches the goal with 0.6 exactly
    MarkovChain chain = induced_mc(member_from_quotient(q, 1), alpha);
    REQUIRE(value == Catch::Approx(mc_reach(to_numeric(chain)).value).margin(1e-9));
    REQUIRE(ok);
}

TEST_CASE("detour: policy b,b wins members 1 and 3 but not the full family") {
    fixtures::LoadedFamily f = fixtures::load_detour();
    const QuotientMdp& q = f.quotient;
    Policy bb;
    bb.choice.assign(q.state_count(), 0);
    for (std::uint32_t s = 0; s < q.state_count(); ++s)
        for (std::uint32_t a = 0; a < q.actions[s].size(); ++a)
            if (q.actionNames[q.actions[s][a].nameId] == "b") bb.choice[s] = a;
    SynthesisConfig cfg = config_for(1.0);
    FamilyIndexSet oneThree(3);
    oneThree.insert(0);
    oneThree.insert(2);
    auto [okPair, vp] = test_policy_robust(restrict(q, oneThree), bb, cfg);
    REQUIRE(okPair);
    auto [okAll, va] = test_policy_robust(restrict(q, q.space.full_set()), bb, cfg);
    REQUIRE_FALSE(okAll);
}

TEST_CASE("baselines agree with each other and report the documented values") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    SECTION("one-by-one solves both members") {
        BaselineResult res = baseline_one_by_one(f.program, f.spec);
        REQUIRE(res.verdicts.size() == 2);
        REQUIRE(res.verdicts[0].value == Catch::Approx(0.8).margin(1e-6));
        REQUIRE(res.verdicts[1].value == Catch::Approx(0.7).margin(1e-6));
        REQUIRE(res.verdicts[0].sat);
        REQUIRE(res.verdicts[1].sat);
        REQUIRE(res.iterations == 2);
    }
    SECTION("all-in-one reads member values at the initial copies") {
        BaselineResult res = baseline_all_in_one(f.program, f.spec);
        REQUIRE(res.verdicts[0].value == Catch::Approx(0.8).margin(1e-6));
        REQUIRE(res.verdicts[1].value == Catch::Approx(0.7).margin(1e-6));
        REQUIRE(res.iterations == 1);
        // dummy initial plus two three-state members
        REQUIRE(res.totalStates == 7);
    }
    SECTION("all-in-one trips the state cap on purpose") {
        BuildOptions tight;
        tight.stateCap = 4;
        REQUIRE_THROWS_AS(baseline_all_in_one(f.program, f.spec, tight), ResourceLimitError);
    }
    SECTION("classifications agree across baselines on the gridworld") {
        fixtures::LoadedFamily grid = fixtures::load_gridworld("P>=0.9 [ F \"goal\" ]");
        BaselineResult one = baseline_one_by_one(grid.program, grid.spec);
        BaselineResult all = baseline_all_in_one(grid.program, grid.spec);
        REQUIRE(one.verdicts.size() == 12);
        for (std::size_t i = 0; i < one.verdicts.size(); ++i)
            REQUIRE(one.verdicts[i].sat == all.verdicts[i].sat);
    }
}

TEST_CASE("policy trees match per-member ground truth on random families") {
    std::mt19937_64 rng(90210);
    std::uniform_real_distribution<double> lambdaDist(0.05, 0.95);
    for (int round = 0; round < 30; ++round) {
        auto members = oracles::random_family(rng, 8, 3, 6);
        QuotientMdp q = oracles::quotient_from_members(members);
        double lambda = lambdaDist(rng);
        Method method = round % 4 == 3 ? Method::Random : Method::Game;
        SplitStrategy split = round % 3 == 0   ? SplitStrategy::OptimisticUnreachable
                              : round % 3 == 1 ? SplitStrategy::OptimisticReachable
                                               : SplitStrategy::Pessimistic;
        auto res = build_tree(q, q.space.full_set(), config_for(lambda, method, split));
        std::vector<bool> truth(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) {
            double v = oracles::exhaustive_max(to_numeric(members[i])).best;
            truth[i] = meets_threshold(v, lambda);
        }
        check_against_members(res.tree, truth, lambda);
        REQUIRE(res.stats.splits <= members.size());
        REQUIRE(res.tree.nodes.size() <= 2 * members.size() - 1);
    }
}

TEST_CASE("trees built from random sketches match the one-by-one baseline") {
    std::mt19937_64 rng(777);
    for (int round = 0; round < 12; ++round) {
        std::string text = oracles::random_sketch_text(rng);
        SketchProgram prog = parse_sketch(text);
        Specification spec = parse_specification("P>=0.42 [ F \"goal\" ]", prog);
        QuotientMdp q = build_quotient(prog);
        q.targets = eval_state_predicate(prog, q.stateValuations, spec.target);
        auto res = build_tree(q, q.space.full_set(), config_for(0.42));
        BaselineResult oracle = baseline_one_by_one(prog, spec);
        for (std::uint64_t i = 0; i < q.family_size(); ++i) {
            int leaf = res.tree.leaf_of_member(i);
            REQUIRE((res.tree.node(leaf).kind == NodeKind::PolicyLeaf) == oracle.verdicts[i].sat);
        }
    }
}

TEST_CASE("identical configuration reproduces the identical tree") {
    fixtures::LoadedFamily f = fixtures::load_gridworld("P>=0.95 [ F \"goal\" ]");
    auto res1 = build_tree(f.quotient, f.quotient.space.full_set(), config_for(0.95));
    auto res2 = build_tree(f.quotient, f.quotient.space.full_set(), config_for(0.95));
    REQUIRE(export_json(res1.tree) == export_json(res2.tree));
}

TEST_CASE("parallel sibling solves produce the sequential tree") {
    fixtures::LoadedFamily f = fixtures::load_gridworld("P>=0.95 [ F \"goal\" ]");
    SynthesisConfig seq = config_for(0.95);
    SynthesisConfig par = config_for(0.95);
    par.jobs = 4;
    auto res1 = build_tree(f.quotient, f.quotient.space.full_set(), seq);
    auto res2 = build_tree(f.quotient, f.quotient.space.full_set(), par);
    REQUIRE(export_json(res1.tree) == export_json(res2.tree));
    REQUIRE(res1.stats.iterations == res2.stats.iterations);
}

TEST_CASE("iteration caps produce flagged partial trees") {
    fixtures::LoadedFamily f = fixtures::load_gridworld("P>=0.99 [ F \"goal\" ]");
    SynthesisConfig cfg = config_for(0.99);
    cfg.iterationCap = 2;
    auto res = build_tree(f.quotient, f.quotient.space.full_set(), cfg);
    REQUIRE(res.stats.aborted);
    REQUIRE(res.stats.unknownLeaves >= 1);
}

TEST_CASE("stats count iterations as game plus quotient model-checking calls") {
    fixtures::LoadedFamily f = fixtures::load_two_member();
    auto res = build_tree(f.quotient, f.quotient.space.full_set(), config_for(0.9));
    // one failing game solve plus one successful unsat certificate
    REQUIRE(res.stats.gameSolves == 1);
    REQUIRE(res.stats.quotientSolves == 1);
    REQUIRE(res.stats.iterations == 2);
    REQUIRE(res.stats.iterations >= res.stats.leaves);
}
