#pragma once

#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "famtree/postprocess.hpp"
#include "famtree/synthesis.hpp"

namespace famtree {

/// Run summary: model statistics, synthesis counters, and the derived
/// leaf/policy/iteration ratios, serializable as JSON and as aligned text.
struct RunReport {
    std::string sketchPath;
    std::string spec;
    std::string method;
    std::string split;
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    std::size_t states = 0;
    std::size_t totalActions = 0; // quotient choices, identifier classes included
    std::uint64_t familySize = 0;
    std::optional<double> satPercent; // only when an oracle/baseline ran

    SynthesisStats stats;
    std::optional<PostprocessStats> post;
    double buildSeconds = 0.0;
    double totalSeconds = 0.0;

    double leavesPerFamilyPercent() const {
        return familySize ? 100.0 * static_cast<double>(stats.leaves) / familySize : 0.0;
    }
    std::optional<double> policiesPerSatPercent() const {
        if (!satPercent || *satPercent == 0.0) return std::nullopt;
        double satCount = *satPercent / 100.0 * static_cast<double>(familySize);
        if (satCount == 0.0) return std::nullopt;
        return 100.0 * static_cast<double>(stats.distinctPolicies) / satCount;
    }
    double iterationsPerFamilyPercent() const {
        return familySize ? 100.0 * static_cast<double>(stats.iterations) / familySize : 0.0;
    }
};

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json doc;
    doc["sketch"] = r.sketchPath;
    doc["spec"] = r.spec;
    doc["method"] = r.method;
    doc["split"] = r.split;
    doc["seed"] = r.seed;
    doc["jobs"] = r.jobs;
    doc["model"] = {{"states", r.states},
                    {"totalActions", r.totalActions},
                    {"familySize", r.familySize}};
    if (r.satPercent) doc["model"]["satPercent"] = *r.satPercent;
    doc["synthesis"] = {{"iterations", r.stats.iterations},
                        {"gameSolves", r.stats.gameSolves},
                        {"quotientSolves", r.stats.quotientSolves},
                        {"robustnessChecks", r.stats.robustnessChecks},
                        {"splits", r.stats.splits},
                        {"nodes", r.stats.nodes},
                        {"leaves", r.stats.leaves},
                        {"policyLeaves", r.stats.policyLeaves},
                        {"unsatLeaves", r.stats.unsatLeaves},
                        {"unknownLeaves", r.stats.unknownLeaves},
                        {"distinctPolicies", r.stats.distinctPolicies},
                        {"aborted", r.stats.aborted},
                        {"seconds", r.stats.synthesisSeconds}};
    if (r.post)
        doc["postprocess"] = {{"nodesBefore", r.post->nodesBefore},
                              {"nodesAfter", r.post->nodesAfter},
                              {"leavesBefore", r.post->leavesBefore},
                              {"leavesAfter", r.post->leavesAfter},
                              {"policiesBefore", r.post->policiesBefore},
                              {"policiesAfter", r.post->policiesAfter},
                              {"mergeChecks", r.post->mergeChecks},
                              {"seconds", r.post->seconds}};
    doc["ratios"] = {{"leavesPerFamilyPercent", r.leavesPerFamilyPercent()},
                     {"iterationsPerFamilyPercent", r.iterationsPerFamilyPercent()}};
    if (auto p = r.policiesPerSatPercent()) doc["ratios"]["policiesPerSatPercent"] = *p;
    doc["timing"] = {{"buildSeconds", r.buildSeconds}, {"totalSeconds", r.totalSeconds}};
    return doc;
}

inline std::string report_to_text(const RunReport& r) {
    std::ostringstream out;
    auto line = [&](const std::string& key, const std::string& value) {
        out << "  " << std::left << std::setw(22) << key << value << "\n";
    };
    auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(v < 0.01 && v > 0 ? 4 : 2) << v << "%";
        return s.str();
    };
    out << "model\n";
    line("states", std::to_string(r.states));
    line("total actions", std::to_string(r.totalActions));
    line("family size", std::to_string(r.familySize));
    if (r.satPercent) line("satisfiable", pct(*r.satPercent));
    out << "synthesis (" << r.method << ", " << r.split << ")\n";
    line("iterations", std::to_string(r.stats.iterations));
    line("nodes", std::to_string(r.stats.nodes));
    line("leaves", std::to_string(r.stats.leaves));
    line("policy leaves", std::to_string(r.stats.policyLeaves));
    line("unsat leaves", std::to_string(r.stats.unsatLeaves));
    line("distinct policies", std::to_string(r.stats.distinctPolicies));
    if (r.stats.unknownLeaves) line("unknown leaves", std::to_string(r.stats.unknownLeaves));
    {
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << r.stats.synthesisSeconds << " s";
        line("time", s.str());
    }
    if (r.post) {
        out << "postprocess\n";
        line("nodes", std::to_string(r.post->nodesBefore) + " -> " +
                          std::to_string(r.post->nodesAfter));
        line("leaves", std::to_string(r.post->leavesBefore) + " -> " +
                           std::to_string(r.post->leavesAfter));
        line("policies", std::to_string(r.post->policiesBefore) + " -> " +
                             std::to_string(r.post->policiesAfter));
    }
    out << "ratios\n";
    line("L/F", pct(r.leavesPerFamilyPercent()));
    if (auto p = r.policiesPerSatPercent()) line("P/SAT", pct(*p));
    line("I/F", pct(r.iterationsPerFamilyPercent()));
    return out.str();
}

inline std::size_t quotient_total_actions(const QuotientMdp& q) {
    std::size_t total = 0;
    for (const auto& acts : q.actions)
        for (const auto& qa : acts) total += qa.classes.size();
    return total;
}

} // namespace famtree
