#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "famtree/tree.hpp"

namespace famtree {

namespace detail {

inline nlohmann::json index_set_runs(const FamilyIndexSet& set) {
    nlohmann::json runs = nlohmann::json::array();
    for (auto [start, len] : set.runs()) runs.push_back({start, len});
    return runs;
}

inline FamilyIndexSet index_set_from_runs(const nlohmann::json& runs, std::size_t universe) {
    FamilyIndexSet set(universe);
    for (const auto& run : runs) {
        std::size_t start = run.at(0).get<std::size_t>();
        std::size_t len = run.at(1).get<std::size_t>();
        for (std::size_t i = 0; i < len; ++i) set.insert(start + i);
    }
    return set;
}

inline const char* kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::Inner: return "inner";
        case NodeKind::PolicyLeaf: return "policy";
        case NodeKind::UnsatLeaf: return "unsat";
        case NodeKind::UnknownLeaf: return "unknown";
    }
    return "?";
}

inline NodeKind kind_from_name(const std::string& name) {
    if (name == "inner") return NodeKind::Inner;
    if (name == "policy") return NodeKind::PolicyLeaf;
    if (name == "unsat") return NodeKind::UnsatLeaf;
    if (name == "unknown") return NodeKind::UnknownLeaf;
    throw ModelError("unknown tree node kind '" + name + "'");
}

} // namespace detail

/// Machine-readable tree export. Node ids are depth-first; each non-root
/// node may carry a hole predicate describing its subset within its parent.
inline nlohmann::json tree_to_json(const PolicyTree& tree) {
    const QuotientMdp& q = *tree.quotient;
    nlohmann::json doc;
    doc["lambda"] = tree.lambda;
    doc["spec"] = tree.specText;
    doc["familySize"] = q.family_size();
    nlohmann::json holes = nlohmann::json::array();
    for (const auto& h : q.space.holes()) {
        nlohmann::json hv;
        hv["name"] = h.name;
        hv["values"] = h.values;
        holes.push_back(hv);
    }
    doc["holes"] = holes;
    doc["root"] = tree.root;
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        nlohmann::json n;
        n["id"] = id;
        n["kind"] = detail::kind_name(node.kind);
        n["indexCount"] = node.indexSet.count();
        n["indexSet"] = detail::index_set_runs(node.indexSet);
        if (node.kind == NodeKind::Inner) {
            n["children"] = {node.left, node.right};
            std::string lp = hole_predicate(q.space, node.indexSet, tree.node(node.left).indexSet);
            std::string rp = hole_predicate(q.space, node.indexSet, tree.node(node.right).indexSet);
            if (!lp.empty()) n["leftPredicate"] = lp;
            if (!rp.empty()) n["rightPredicate"] = rp;
        }
        if (node.kind == NodeKind::PolicyLeaf) {
            nlohmann::json entries = nlohmann::json::array();
            for (std::size_t s = 0; s < node.policy->base.choice.size(); ++s) {
                if (!node.policy->fragment[s]) continue;
                std::uint32_t a = node.policy->base.choice[s];
                entries.push_back({s, a, q.action_name(static_cast<std::uint32_t>(s), a)});
            }
            n["policy"] = {{"entries", entries}};
        }
        nodes.push_back(std::move(n));
    }
    doc["nodes"] = nodes;
    return doc;
}

inline std::string export_json(const PolicyTree& tree) { return tree_to_json(tree).dump(2) + "\n"; }

inline PolicyTree tree_from_json(const nlohmann::json& doc, const QuotientMdp& quotient) {
    PolicyTree tree;
    tree.quotient = &quotient;
    tree.lambda = doc.at("lambda").get<double>();
    tree.specText = doc.value("spec", std::string{});
    if (doc.at("familySize").get<std::uint64_t>() != quotient.family_size())
        throw ModelError("tree was produced for a family of different size");
    tree.root = doc.at("root").get<int>();
    const auto& nodes = doc.at("nodes");
    tree.nodes.resize(nodes.size());
    for (const auto& n : nodes) {
        int id = n.at("id").get<int>();
        TreeNode& node = tree.nodes.at(id);
        node.kind = detail::kind_from_name(n.at("kind").get<std::string>());
        node.indexSet = detail::index_set_from_runs(n.at("indexSet"), quotient.family_size());
        if (node.kind == NodeKind::Inner) {
            node.left = n.at("children").at(0).get<int>();
            node.right = n.at("children").at(1).get<int>();
        }
        if (node.kind == NodeKind::PolicyLeaf) {
            auto lp = std::make_shared<LeafPolicy>();
            lp->base.choice.assign(quotient.state_count(), 0);
            lp->fragment.assign(quotient.state_count(), 0);
            for (const auto& entry : n.at("policy").at("entries")) {
                std::uint32_t s = entry.at(0).get<std::uint32_t>();
                std::uint32_t a = entry.at(1).get<std::uint32_t>();
                if (s >= quotient.state_count() || a >= quotient.actions[s].size())
                    throw ModelError("tree policy references an unknown state or action");
                lp->base.choice[s] = a;
                lp->fragment[s] = 1;
            }
            node.policy = lp;
        }
    }
    return tree;
}

/// DOT rendering mirroring the readable tree figures: inner nodes show the
/// subfamily size, edges carry hole predicates when the split is hole-
/// rectangular, leaves show their policy number or the UNSAT verdict.
inline std::string export_dot(const PolicyTree& tree) {
    const QuotientMdp& q = *tree.quotient;
    std::ostringstream out;
    out << "digraph policytree {\n";
    // number distinct policies by first appearance in depth-first order
    std::vector<const Policy*> policies;
    auto policyNumber = [&](const Policy& p) {
        for (std::size_t k = 0; k < policies.size(); ++k)
            if (*policies[k] == p) return k;
        policies.push_back(&p);
        return policies.size() - 1;
    };
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        out << "  n" << id << " [";
        switch (node.kind) {
            case NodeKind::Inner:
                out << "shape=ellipse,label=\"" << node.indexSet.count() << "\"";
                break;
            case NodeKind::PolicyLeaf:
                out << "shape=box,label=\"policy " << policyNumber(node.policy->base) << "\\n"
                    << node.indexSet.count() << " member"
                    << (node.indexSet.count() == 1 ? "" : "s") << "\"";
                break;
            case NodeKind::UnsatLeaf:
                out << "shape=box,style=dashed,label=\"UNSAT\\n" << node.indexSet.count()
                    << " member" << (node.indexSet.count() == 1 ? "" : "s") << "\"";
                break;
            case NodeKind::UnknownLeaf:
                out << "shape=box,style=dotted,label=\"unknown\"";
                break;
        }
        out << "];\n";
    }
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const TreeNode& node = tree.nodes[id];
        if (node.kind != NodeKind::Inner) continue;
        for (int child : {node.left, node.right}) {
            std::string pred = hole_predicate(q.space, node.indexSet, tree.node(child).indexSet);
            out << "  n" << id << " -> n" << child << " [label=\""
                << (pred.empty() ? std::to_string(tree.node(child).indexSet.count()) : pred)
                << "\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

/// Debug export of an explicit MDP with exact probabilities.
inline nlohmann::json mdp_to_json(const ExplicitMdp& m) {
    nlohmann::json doc;
    doc["states"] = m.state_count();
    doc["initial"] = m.initial;
    doc["variables"] = m.variableNames;
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < m.state_count(); ++s) {
        nlohmann::json st;
        st["id"] = s;
        if (!m.stateValuations.empty()) st["valuation"] = m.stateValuations[s];
        if (!m.targets.empty()) st["target"] = static_cast<bool>(m.targets[s]);
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& a : m.actions[s]) {
            nlohmann::json act;
            act["name"] = m.actionNames[a.nameId];
            nlohmann::json branches = nlohmann::json::array();
            for (const auto& e : a.row) branches.push_back({{"to", e.state}, {"prob", e.prob.to_string()}});
            act["branches"] = branches;
            actions.push_back(std::move(act));
        }
        st["actions"] = actions;
        states.push_back(std::move(st));
    }
    doc["stateList"] = states;
    return doc;
}

/// Debug export of a quotient MDP including the identifier-class coloring.
inline nlohmann::json quotient_to_json(const QuotientMdp& q) {
    nlohmann::json doc;
    doc["states"] = q.state_count();
    doc["initial"] = q.initial;
    doc["familySize"] = q.family_size();
    doc["variables"] = q.variableNames;
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        nlohmann::json st;
        st["id"] = s;
        if (!q.stateValuations.empty()) st["valuation"] = q.stateValuations[s];
        if (!q.targets.empty()) st["target"] = static_cast<bool>(q.targets[s]);
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& qa : q.actions[s]) {
            nlohmann::json act;
            act["name"] = q.actionNames[qa.nameId];
            nlohmann::json classes = nlohmann::json::array();
            for (const auto& cls : qa.classes) {
                nlohmann::json c;
                c["members"] = detail::index_set_runs(cls.members);
                nlohmann::json branches = nlohmann::json::array();
                for (const auto& e : cls.row)
                    branches.push_back({{"to", e.state}, {"prob", e.prob.to_string()}});
                c["branches"] = branches;
                classes.push_back(std::move(c));
            }
            act["classes"] = classes;
            actions.push_back(std::move(act));
        }
        st["actions"] = actions;
        states.push_back(std::move(st));
    }
    doc["stateList"] = states;
    return doc;
}

} // namespace famtree
