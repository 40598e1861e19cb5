#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "famtree/family.hpp"
#include "famtree/quotient.hpp"

namespace famtree {

enum class NodeKind { Inner, PolicyLeaf, UnsatLeaf, UnknownLeaf };

/// Leaf payload: a base-action policy together with the fragment of the
/// quotient it was verified on. Outside the fragment the policy falls back
/// to the lowest action index, which keeps merged policies well-defined.
struct LeafPolicy {
    Policy base;
    StateMask fragment;
};

using LeafPolicyPtr = std::shared_ptr<const LeafPolicy>;

/// Zeroes all choices outside the fragment so that structurally equal
/// policies compare equal regardless of solver artifacts off-fragment.
inline Policy canonicalize_policy(Policy base, const StateMask& fragment) {
    for (std::size_t s = 0; s < base.choice.size(); ++s)
        if (!fragment[s]) base.choice[s] = 0;
    return base;
}

/// The policy-merge operation: follow the first policy on its fragment and
/// the second one everywhere else.
inline Policy merge_policies(const Policy& first, const Policy& second,
                             const StateMask& fragmentFirst, const StateMask& /*fragmentSecond*/) {
    Policy merged = second;
    for (std::size_t s = 0; s < merged.choice.size(); ++s)
        if (fragmentFirst[s]) merged.choice[s] = first.choice[s];
    return merged;
}

/// Two policies are compatible when they agree on every state lying in both
/// reachable fragments; the merge of compatible policies wins wherever
/// either one did.
inline bool policies_compatible(const LeafPolicy& a, const LeafPolicy& b) {
    for (std::size_t s = 0; s < a.base.choice.size(); ++s)
        if (a.fragment[s] && b.fragment[s] && a.base.choice[s] != b.base.choice[s]) return false;
    return true;
}

struct TreeNode {
    FamilyIndexSet indexSet;
    NodeKind kind = NodeKind::UnknownLeaf;
    int left = -1, right = -1;
    LeafPolicyPtr policy; // PolicyLeaf only
};

/// Recursive partition of the family: inner nodes split their index set into
/// the two children, leaves carry a robust policy or an unsatisfiability
/// verdict for every member they cover.
struct PolicyTree {
    const QuotientMdp* quotient = nullptr;
    double lambda = 0.0;
    std::string specText;
    std::vector<TreeNode> nodes;
    int root = 0;

    const TreeNode& node(int id) const { return nodes[id]; }
    TreeNode& node(int id) { return nodes[id]; }

    std::size_t leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes)
            if (nd.kind != NodeKind::Inner) ++n;
        return n;
    }
    std::size_t policy_leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes)
            if (nd.kind == NodeKind::PolicyLeaf) ++n;
        return n;
    }
    std::size_t unsat_leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes)
            if (nd.kind == NodeKind::UnsatLeaf) ++n;
        return n;
    }
    std::size_t unknown_leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes)
            if (nd.kind == NodeKind::UnknownLeaf) ++n;
        return n;
    }
    std::size_t inner_count() const { return nodes.size() - leaf_count(); }

    std::vector<int> leaves_depth_first() const {
        std::vector<int> out, stack{root};
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            const TreeNode& nd = nodes[id];
            if (nd.kind != NodeKind::Inner) { out.push_back(id); continue; }
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        }
        return out;
    }

    /// Number of structurally distinct policies carried by the leaves.
    std::size_t distinct_policy_count() const {
        std::vector<const Policy*> seen;
        for (const auto& nd : nodes) {
            if (nd.kind != NodeKind::PolicyLeaf) continue;
            bool dup = false;
            for (const Policy* p : seen)
                if (*p == nd.policy->base) { dup = true; break; }
            if (!dup) seen.push_back(&nd.policy->base);
        }
        return seen.size();
    }

    /// Leaf covering a given family member.
    int leaf_of_member(std::uint64_t member) const {
        int id = root;
        while (nodes[id].kind == NodeKind::Inner) {
            if (nodes[nodes[id].left].indexSet.contains(member)) id = nodes[id].left;
            else id = nodes[id].right;
        }
        return id;
    }

    /// Renumbers nodes into depth-first order (root 0, left subtree first);
    /// exports and stats rely on this canonical numbering.
    void renumber_depth_first() {
        std::vector<TreeNode> out;
        out.reserve(nodes.size());
        renumber_rec(root, out);
        nodes = std::move(out);
        root = 0;
    }

private:
    int renumber_rec(int id, std::vector<TreeNode>& out) {
        int newId = static_cast<int>(out.size());
        out.push_back(nodes[id]);
        if (nodes[id].kind == NodeKind::Inner) {
            int l = renumber_rec(nodes[id].left, out);
            int r = renumber_rec(nodes[id].right, out);
            out[newId].left = l;
            out[newId].right = r;
        }
        return newId;
    }
};

/// Rectangular description of a node's subset relative to its parent as a
/// predicate on one hole ("OX<=3", "OY=2", "OX in {2,4}"), when one exists.
inline std::string hole_predicate(const HoleSpace& space, const FamilyIndexSet& parent,
                                  const FamilyIndexSet& child) {
    for (std::size_t h = 0; h < space.hole_count(); ++h) {
        const auto& hole = space.holes()[h];
        std::vector<std::size_t> childVals, parentVals;
        FamilyIndexSet cover(child.universe_size());
        for (std::size_t v = 0; v < hole.values.size(); ++v) {
            const FamilyIndexSet& mask = space.value_mask(h, v);
            if (mask.intersects(parent)) parentVals.push_back(v);
            if (mask.intersects(child)) {
                childVals.push_back(v);
                cover.unite_with(mask);
            }
        }
        if (childVals.size() == parentVals.size()) continue; // no constraint from this hole
        if ((cover & parent) != child) continue;
        if (childVals.size() == 1)
            return hole.name + "=" + std::to_string(hole.values[childVals[0]]);
        bool contiguous = childVals.back() - childVals.front() + 1 == childVals.size();
        if (contiguous && childVals.front() == parentVals.front())
            return hole.name + "<=" + std::to_string(hole.values[childVals.back()]);
        if (contiguous && childVals.back() == parentVals.back())
            return hole.name + ">=" + std::to_string(hole.values[childVals.front()]);
        std::string s = hole.name + " in {";
        for (std::size_t k = 0; k < childVals.size(); ++k) {
            if (k) s += ",";
            s += std::to_string(hole.values[childVals[k]]);
        }
        return s + "}";
    }
    return {};
}

} // namespace famtree
