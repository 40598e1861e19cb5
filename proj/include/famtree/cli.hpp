#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "famtree/build.hpp"
#include "famtree/postprocess.hpp"
#include "famtree/report.hpp"
#include "famtree/synthesis.hpp"
#include "famtree/tree_io.hpp"

namespace famtree {

namespace cli_detail {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitResource = 2;
constexpr int kExitVerification = 3;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write '" + path + "'");
    out << content;
}

struct PreparedFamily {
    SketchProgram program;
    Specification spec;
    QuotientMdp quotient;
    double buildSeconds = 0.0;
};

inline PreparedFamily prepare(const std::string& sketchPath, const std::string& specText,
                              const BuildOptions& opts, std::ostream& err) {
    PreparedFamily p;
    p.program = parse_sketch(read_file(sketchPath));
    p.spec = parse_specification(specText, p.program);
    auto started = std::chrono::steady_clock::now();
    p.quotient = build_quotient(p.program, opts);
    p.quotient.targets =
        eval_state_predicate(p.program, p.quotient.stateValuations, p.spec.target);
    p.buildSeconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (const auto& w : p.quotient.warnings) err << "warning: " << w << "\n";
    return p;
}

inline std::string csv_of(const BaselineResult& res, const SketchProgram& program,
                          const HoleSpace& space) {
    std::ostringstream out;
    for (const auto& h : program.holes) out << h.name << ",";
    out << "value,sat\n";
    out << std::setprecision(10);
    for (std::uint64_t i = 0; i < res.verdicts.size(); ++i) {
        HoleAssignment a = space.assignment(i);
        for (auto v : a.values) out << v << ",";
        out << res.verdicts[i].value << "," << (res.verdicts[i].sat ? 1 : 0) << "\n";
    }
    return out.str();
}

} // namespace cli_detail

/// Command-line driver; argv-style arguments without the program name.
/// Exit codes: 0 success, 1 input error, 2 resource cap, 3 verification
/// failure or classification mismatch.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"policy-tree synthesis for families of MDPs"};
    app.require_subcommand(1);

    std::string sketchPath, specText, treePath;
    std::string method = "game", split = "optimistic-unreachable";
    std::string exportDot, exportJson, reportPath, outPath, checkAgainst;
    bool noPostprocess = false;
    std::uint64_t seed = 0;
    double timeLimit = 0.0;
    std::size_t stateCap = 1'000'000, iterationCap = 0;
    unsigned jobs = 1;

    CLI::App* synth = app.add_subcommand("synthesize", "synthesize a policy tree for a sketch");
    synth->add_option("--sketch", sketchPath, "sketch file")->required();
    synth->add_option("--spec", specText, "reachability specification, e.g. 'P>=0.5 [ F \"goal\" ]'")
        ->required();
    synth->add_option("--method", method, "abstraction method")
        ->check(CLI::IsMember({"game", "random"}));
    synth->add_option("--split", split, "splitting strategy")
        ->check(CLI::IsMember({"optimistic-unreachable", "optimistic-reachable", "pessimistic"}));
    synth->add_flag("--no-postprocess", noPostprocess, "skip tree post-processing");
    synth->add_option("--export-dot", exportDot, "write the tree in DOT format");
    synth->add_option("--export-json", exportJson, "write the tree in JSON format");
    synth->add_option("--report", reportPath, "write the run report as JSON");
    synth->add_option("--seed", seed, "recorded in the report (the method is deterministic)");
    synth->add_option("--time-limit", timeLimit, "synthesis time limit in seconds");
    synth->add_option("--state-cap", stateCap, "maximum explored states");
    synth->add_option("--iteration-cap", iterationCap, "maximum model-checking calls");
    synth->add_option("--jobs", jobs, "concurrent sibling-subtree solves");

    std::string baselineMode;
    CLI::App* base = app.add_subcommand("baseline", "run a baseline algorithm");
    base->add_option("mode", baselineMode, "one-by-one or all-in-one")
        ->required()
        ->check(CLI::IsMember({"one-by-one", "all-in-one"}));
    base->add_option("--sketch", sketchPath, "sketch file")->required();
    base->add_option("--spec", specText, "reachability specification")->required();
    base->add_option("--out", outPath, "CSV output path (default: stdout)");
    base->add_option("--check-against", checkAgainst,
                     "tree JSON to compare classifications against");
    base->add_option("--report", reportPath, "write timing JSON");
    base->add_option("--state-cap", stateCap, "maximum explored states");

    CLI::App* verify = app.add_subcommand("verify", "re-verify an exported policy tree");
    verify->add_option("--sketch", sketchPath, "sketch file")->required();
    verify->add_option("--spec", specText, "reachability specification")->required();
    verify->add_option("--tree", treePath, "tree JSON produced by synthesize")->required();

    std::vector<const char*> argv;
    argv.push_back("famtree");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }

    BuildOptions buildOpts;
    buildOpts.stateCap = stateCap;

    try {
        if (synth->parsed()) {
            PreparedFamily p = prepare(sketchPath, specText, buildOpts, err);
            SynthesisConfig cfg;
            cfg.method = method == "game" ? Method::Game : Method::Random;
            cfg.split = split == "pessimistic" ? SplitStrategy::Pessimistic
                        : split == "optimistic-reachable" ? SplitStrategy::OptimisticReachable
                                                          : SplitStrategy::OptimisticUnreachable;
            if (cfg.method == Method::Random && split != "pessimistic") {
                err << "note: the random method always splits pessimistically\n";
                cfg.split = SplitStrategy::Pessimistic;
            }
            cfg.lambda = p.spec.lambda;
            cfg.seed = seed;
            cfg.timeLimitSeconds = timeLimit;
            cfg.iterationCap = iterationCap;
            cfg.jobs = jobs;
            auto started = std::chrono::steady_clock::now();
            SynthesisResult res = build_tree(p.quotient, p.quotient.space.full_set(), cfg);
            res.tree.specText = p.spec.text;
            RunReport report;
            report.sketchPath = sketchPath;
            report.spec = p.spec.text;
            report.method = to_string(cfg.method);
            report.split = to_string(cfg.split);
            report.seed = seed;
            report.jobs = jobs;
            report.states = p.quotient.state_count();
            report.totalActions = quotient_total_actions(p.quotient);
            report.familySize = p.quotient.family_size();
            report.stats = res.stats;
            report.buildSeconds = p.buildSeconds;
            if (!noPostprocess && !res.stats.aborted) {
                report.post = postprocess(res.tree, cfg);
                res.stats.postprocessChecks = report.post->mergeChecks;
                report.stats.nodes = res.tree.nodes.size();
                report.stats.leaves = res.tree.leaf_count();
                report.stats.policyLeaves = res.tree.policy_leaf_count();
                report.stats.unsatLeaves = res.tree.unsat_leaf_count();
                report.stats.distinctPolicies = res.tree.distinct_policy_count();
            }
            report.totalSeconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                    .count() +
                p.buildSeconds;
            if (!exportDot.empty()) write_file(exportDot, export_dot(res.tree));
            if (!exportJson.empty()) write_file(exportJson, export_json(res.tree));
            if (!reportPath.empty()) write_file(reportPath, report_to_json(report).dump(2) + "\n");
            out << report_to_text(report);
            return res.stats.aborted ? kExitResource : kExitOk;
        }

        if (base->parsed()) {
            PreparedFamily p = prepare(sketchPath, specText, buildOpts, err);
            HoleSpace space(p.program.holes, buildOpts.familyCap);
            BaselineResult res = baselineMode == "one-by-one"
                                     ? baseline_one_by_one(p.program, p.spec, buildOpts, false)
                                     : baseline_all_in_one(p.program, p.spec, buildOpts);
            std::string csv = csv_of(res, p.program, space);
            if (outPath.empty()) out << csv;
            else write_file(outPath, csv);
            if (!reportPath.empty()) {
                nlohmann::json doc;
                doc["baseline"] = baselineMode;
                doc["members"] = res.verdicts.size();
                doc["iterations"] = res.iterations;
                doc["seconds"] = res.seconds;
                if (baselineMode == "all-in-one") doc["totalStates"] = res.totalStates;
                std::size_t satCount = 0;
                for (const auto& v : res.verdicts) satCount += v.sat ? 1 : 0;
                doc["satCount"] = satCount;
                write_file(reportPath, doc.dump(2) + "\n");
            }
            if (!checkAgainst.empty()) {
                nlohmann::json doc = nlohmann::json::parse(read_file(checkAgainst));
                PolicyTree tree = tree_from_json(doc, p.quotient);
                std::size_t mismatches = 0;
                for (std::uint64_t i = 0; i < p.quotient.family_size(); ++i) {
                    bool treeSat =
                        tree.node(tree.leaf_of_member(i)).kind == NodeKind::PolicyLeaf;
                    if (treeSat != res.verdicts[i].sat) {
                        ++mismatches;
                        if (mismatches <= 5)
                            err << "mismatch at member " << space.describe(i) << ": baseline "
                                << (res.verdicts[i].sat ? "SAT" : "UNSAT") << ", tree "
                                << (treeSat ? "SAT" : "UNSAT") << "\n";
                    }
                }
                if (mismatches) {
                    err << mismatches << " classification mismatch(es)\n";
                    return kExitVerification;
                }
                out << "classifications match the tree\n";
            }
            return kExitOk;
        }

        if (verify->parsed()) {
            PreparedFamily p = prepare(sketchPath, specText, buildOpts, err);
            nlohmann::json doc = nlohmann::json::parse(read_file(treePath));
            PolicyTree tree = tree_from_json(doc, p.quotient);
            SynthesisConfig cfg;
            cfg.lambda = p.spec.lambda;
            VerifyReport report = verify_tree(tree, cfg);
            if (!report.structureOk) err << "structure: " << report.structureDetail << "\n";
            for (const auto& leaf : report.leaves) {
                out << "leaf " << leaf.nodeId << " ("
                    << (leaf.kind == NodeKind::PolicyLeaf ? "policy"
                        : leaf.kind == NodeKind::UnsatLeaf ? "unsat"
                                                           : "unknown")
                    << "): " << (leaf.pass ? "ok" : "FAIL")
                    << (leaf.detail.empty() ? "" : " - " + leaf.detail) << "\n";
            }
            return report.ok() ? kExitOk : kExitVerification;
        }
    } catch (const ResourceLimitError& e) {
        err << "resource limit: " << e.what() << "\n";
        return kExitResource;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

} // namespace famtree
