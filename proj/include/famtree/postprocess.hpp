#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "famtree/synthesis.hpp"
#include "famtree/tree.hpp"

namespace famtree {

struct LeafReport {
    int nodeId = 0;
    NodeKind kind = NodeKind::UnknownLeaf;
    bool pass = false;
    double value = 0.0;
    std::string detail;
};

struct VerifyReport {
    bool structureOk = false;
    bool allLeavesPass = false;
    std::vector<LeafReport> leaves;
    std::string structureDetail;

    bool ok() const { return structureOk && allLeavesPass; }
};

/// Re-checks a policy tree from scratch: structural validity of the
/// partition plus, per leaf, the robustness of its policy or the
/// unsatisfiability of its subfamily.
inline VerifyReport verify_tree(const PolicyTree& tree, const SynthesisConfig& cfg) {
    const QuotientMdp& q = *tree.quotient;
    VerifyReport report;
    report.structureOk = true;
    if (tree.nodes.empty() ||
        tree.node(tree.root).indexSet != FamilyIndexSet(q.family_size(), true)) {
        report.structureOk = false;
        report.structureDetail = "root does not cover the full family";
    }
    for (const auto& node : tree.nodes) {
        if (node.kind != NodeKind::Inner) continue;
        const auto& l = tree.node(node.left).indexSet;
        const auto& r = tree.node(node.right).indexSet;
        if ((l & r).count() != 0 || (l | r) != node.indexSet || l.empty() || r.empty()) {
            report.structureOk = false;
            report.structureDetail = "children do not partition their parent";
            break;
        }
    }
    report.allLeavesPass = true;
    for (int id = 0; id < static_cast<int>(tree.nodes.size()); ++id) {
        const TreeNode& node = tree.nodes[id];
        if (node.kind == NodeKind::Inner) continue;
        LeafReport lr;
        lr.nodeId = id;
        lr.kind = node.kind;
        Restriction r = restrict(q, node.indexSet);
        if (node.kind == NodeKind::PolicyLeaf) {
            auto [ok, value] = test_policy_robust(r, node.policy->base, cfg);
            lr.pass = ok;
            lr.value = value;
            if (!ok) lr.detail = "policy is not robust for the leaf's subfamily";
        } else if (node.kind == NodeKind::UnsatLeaf) {
            UnsatOutcome u = test_unsat(r, cfg);
            lr.pass = u.unsat;
            lr.value = u.value;
            if (!u.unsat) lr.detail = "subfamily is not certified unsatisfiable";
        } else {
            lr.pass = false;
            lr.detail = "unknown leaf (synthesis hit a resource cap)";
        }
        if (!lr.pass) report.allLeavesPass = false;
        report.leaves.push_back(lr);
    }
    return report;
}

struct PostprocessStats {
    std::size_t nodesBefore = 0, nodesAfter = 0;
    std::size_t leavesBefore = 0, leavesAfter = 0;
    std::size_t policiesBefore = 0, policiesAfter = 0;
    std::size_t mergeChecks = 0;      // model-checking calls in step 1
    std::size_t compatibleMerges = 0; // step 2 merges
    std::size_t collapsed = 0;        // step 3 collapsed inner nodes
    double seconds = 0.0;
};

namespace detail {

struct PolicyTable {
    struct Entry {
        LeafPolicyPtr policy;
        FamilyIndexSet family;
        int parent = -1;
    };
    std::vector<Entry> entries;

    int find(int id) {
        while (entries[id].parent >= 0) id = entries[id].parent;
        return id;
    }
};

} // namespace detail

/// Three-step reduction of a verified tree. Step 1 tries to cover one
/// sibling's subfamily with the other's policy via one model-checking call
/// per pair; step 2 merges compatible leaf policies without model checking;
/// step 3 collapses inner nodes whose children carry identical labels.
inline PostprocessStats postprocess(PolicyTree& tree, const SynthesisConfig& cfg) {
    auto started = std::chrono::steady_clock::now();
    const QuotientMdp& q = *tree.quotient;
    PostprocessStats stats;
    stats.nodesBefore = tree.nodes.size();
    stats.leavesBefore = tree.leaf_count();
    stats.policiesBefore = tree.distinct_policy_count();

    // policy identity table: one entry per policy leaf, merged via union-find
    detail::PolicyTable table;
    std::vector<int> leafPolicy(tree.nodes.size(), -1);
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        TreeNode& node = tree.nodes[id];
        if (node.kind != NodeKind::PolicyLeaf) continue;
        leafPolicy[id] = static_cast<int>(table.entries.size());
        table.entries.push_back({node.policy, node.indexSet, -1});
    }

    auto mergedPolicy = [&](int keepId, int otherId) {
        const auto& keep = table.entries[keepId];
        const auto& other = table.entries[otherId];
        auto lp = std::make_shared<LeafPolicy>();
        lp->base = merge_policies(keep.policy->base, other.policy->base, keep.policy->fragment,
                                  other.policy->fragment);
        FamilyIndexSet combined = keep.family | other.family;
        lp->fragment = reachable_fragment_base(restrict(q, combined), lp->base);
        lp->base = canonicalize_policy(lp->base, lp->fragment);
        int rep = static_cast<int>(table.entries.size());
        table.entries.push_back({lp, combined, -1});
        table.entries[keepId].parent = rep;
        table.entries[otherId].parent = rep;
        return rep;
    };

    // Step 1: sibling policy leaves — try to relabel both with one merge.
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        if (node.kind != NodeKind::Inner) continue;
        int l = node.left, r = node.right;
        if (tree.nodes[l].kind != NodeKind::PolicyLeaf ||
            tree.nodes[r].kind != NodeKind::PolicyLeaf)
            continue;
        int pl = table.find(leafPolicy[l]), pr = table.find(leafPolicy[r]);
        if (pl == pr) continue;
        const auto& left = table.entries[pl];
        const auto& right = table.entries[pr];
        Policy leftOverRight = merge_policies(left.policy->base, right.policy->base,
                                              left.policy->fragment, right.policy->fragment);
        ++stats.mergeChecks;
        auto [okRight, v1] = test_policy_robust(restrict(q, right.family), leftOverRight, cfg);
        if (okRight) {
            int rep = mergedPolicy(pl, pr);
            leafPolicy[l] = leafPolicy[r] = rep;
            continue;
        }
        Policy rightOverLeft = merge_policies(right.policy->base, left.policy->base,
                                              right.policy->fragment, left.policy->fragment);
        ++stats.mergeChecks;
        auto [okLeft, v2] = test_policy_robust(restrict(q, left.family), rightOverLeft, cfg);
        if (okLeft) {
            int rep = mergedPolicy(pr, pl);
            leafPolicy[l] = leafPolicy[r] = rep;
        }
    }

    // Step 2: every pair of policy leaves — merge compatible policies.
    std::vector<int> leaves = tree.leaves_depth_first();
    std::vector<int> policyLeaves;
    for (int id : leaves)
        if (tree.nodes[id].kind == NodeKind::PolicyLeaf) policyLeaves.push_back(id);
    for (std::size_t i = 0; i < policyLeaves.size(); ++i) {
        for (std::size_t j = i + 1; j < policyLeaves.size(); ++j) {
            int pi = table.find(leafPolicy[policyLeaves[i]]);
            int pj = table.find(leafPolicy[policyLeaves[j]]);
            if (pi == pj) continue;
            if (!policies_compatible(*table.entries[pi].policy, *table.entries[pj].policy))
                continue;
            mergedPolicy(pi, pj);
            ++stats.compatibleMerges;
        }
    }
    for (int id : policyLeaves) {
        int rep = table.find(leafPolicy[id]);
        tree.nodes[id].policy = table.entries[rep].policy;
        leafPolicy[id] = rep;
    }

    // Step 3: collapse inner nodes with identically labelled leaf children.
    std::vector<int> order; // post-order
    {
        std::vector<std::pair<int, bool>> stack{{tree.root, false}};
        while (!stack.empty()) {
            auto [id, expanded] = stack.back();
            stack.pop_back();
            if (expanded || tree.nodes[id].kind != NodeKind::Inner) {
                order.push_back(id);
                continue;
            }
            stack.push_back({id, true});
            stack.push_back({tree.nodes[id].right, false});
            stack.push_back({tree.nodes[id].left, false});
        }
    }
    for (int id : order) {
        TreeNode& node = tree.nodes[id];
        if (node.kind != NodeKind::Inner) continue;
        const TreeNode& l = tree.nodes[node.left];
        const TreeNode& r = tree.nodes[node.right];
        bool same = false;
        if (l.kind == NodeKind::UnsatLeaf && r.kind == NodeKind::UnsatLeaf) same = true;
        if (l.kind == NodeKind::PolicyLeaf && r.kind == NodeKind::PolicyLeaf &&
            ((leafPolicy[node.left] >= 0 && leafPolicy[node.right] >= 0 &&
              table.find(leafPolicy[node.left]) == table.find(leafPolicy[node.right])) ||
             l.policy->base == r.policy->base))
            same = true;
        if (!same) continue;
        node.kind = l.kind;
        node.policy = l.policy;
        if (static_cast<std::size_t>(id) < leafPolicy.size())
            leafPolicy[id] = leafPolicy[node.left];
        node.left = node.right = -1;
        ++stats.collapsed;
    }
    tree.renumber_depth_first();

    stats.nodesAfter = tree.nodes.size();
    stats.leavesAfter = tree.leaf_count();
    stats.policiesAfter = tree.distinct_policy_count();
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return stats;
}

} // namespace famtree
