#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "famtree/cli.hpp"

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int exitCode = 0;
    std::string out, err;
};

CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    CliRun r;
    r.exitCode = famtree::run_cli(std::move(args), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("famtree_test_" + std::to_string(
                                      std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string model(const std::string& name) { return fixtures::models_dir() + "/" + name; }

} // namespace

TEST_CASE("synthesize reports a single policy leaf below the game value") {
    CliRun r = run({"synthesize", "--sketch", model("two_member.templ"), "--spec",
                    "P>=0.5 [ F \"goal\" ]"});
    REQUIRE(r.exitCode == 0);
    REQUIRE(r.out.find("policy leaves") != std::string::npos);
    REQUIRE(r.out.find("leaves                1") != std::string::npos);
    REQUIRE(r.out.find("distinct policies     1") != std::string::npos);
}

TEST_CASE("synthesize reports a single unsat leaf above the quotient maximum") {
    CliRun r = run({"synthesize", "--sketch", model("two_member.templ"), "--spec",
                    "P>=0.9 [ F \"goal\" ]"});
    REQUIRE(r.exitCode == 0);
    REQUIRE(r.out.find("unsat leaves          1") != std::string::npos);
    REQUIRE(r.out.find("policy leaves         0") != std::string::npos);
}

TEST_CASE("missing sketch file exits with an input error") {
    CliRun r = run({"synthesize", "--sketch", "/nonexistent/file.templ", "--spec",
                    "P>=0.5 [ F \"goal\" ]"});
    REQUIRE(r.exitCode == 1);
    REQUIRE_FALSE(r.err.empty());
}

TEST_CASE("bad specification exits with an input error") {
    CliRun r = run({"synthesize", "--sketch", model("two_member.templ"), "--spec",
                    "P>=0.5 [ G \"goal\" ]"});
    REQUIRE(r.exitCode == 1);
    REQUIRE(r.err.find("error") != std::string::npos);
}

TEST_CASE("exports are byte-identical across runs with the same inputs") {
    TempDir tmp;
    auto args = [&](const std::string& suffix) {
        return std::vector<std::string>{"synthesize", "--sketch", model("gridworld.templ"),
                                        "--spec", "P>=0.99 [ F \"goal\" ]", "--seed", "7",
                                        "--export-json", tmp.file("tree" + suffix + ".json"),
                                        "--export-dot", tmp.file("tree" + suffix + ".dot")};
    };
    REQUIRE(run(args("1")).exitCode == 0);
    REQUIRE(run(args("2")).exitCode == 0);
    REQUIRE(slurp(tmp.file("tree1.json")) == slurp(tmp.file("tree2.json")));
    REQUIRE(slurp(tmp.file("tree1.dot")) == slurp(tmp.file("tree2.dot")));
    REQUIRE_FALSE(slurp(tmp.file("tree1.json")).empty());
}

TEST_CASE("verify accepts fresh trees and rejects tampered thresholds") {
    TempDir tmp;
    CliRun synth = run({"synthesize", "--sketch", model("gridworld.templ"), "--spec",
                        "P>=0.99 [ F \"goal\" ]", "--export-json", tmp.file("tree.json")});
    REQUIRE(synth.exitCode == 0);
    SECTION("fresh tree verifies") {
        CliRun v = run({"verify", "--sketch", model("gridworld.templ"), "--spec",
                        "P>=0.99 [ F \"goal\" ]", "--tree", tmp.file("tree.json")});
        REQUIRE(v.exitCode == 0);
        REQUIRE(v.out.find("FAIL") == std::string::npos);
    }
    SECTION("tampered threshold fails verification") {
        CliRun v = run({"verify", "--sketch", model("gridworld.templ"), "--spec",
                        "P>=0.9999 [ F \"goal\" ]", "--tree", tmp.file("tree.json")});
        REQUIRE(v.exitCode == 3);
        REQUIRE(v.out.find("FAIL") != std::string::npos);
    }
    SECTION("malformed tree JSON is an input error") {
        std::ofstream bad(tmp.file("bad.json"));
        bad << "{ not json";
        bad.close();
        CliRun v = run({"verify", "--sketch", model("gridworld.templ"), "--spec",
                        "P>=0.99 [ F \"goal\" ]", "--tree", tmp.file("bad.json")});
        REQUIRE(v.exitCode == 1);
    }
}

TEST_CASE("baseline one-by-one writes a CSV row per member") {
    TempDir tmp;
    CliRun r = run({"baseline", "one-by-one", "--sketch", model("gridworld.templ"), "--spec",
                    "P>=0.99 [ F \"goal\" ]", "--out", tmp.file("members.csv")});
    REQUIRE(r.exitCode == 0);
    std::string csv = slurp(tmp.file("members.csv"));
    REQUIRE(csv.find("OX,OY,value,sat") == 0);
    std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
    REQUIRE(rows == 13); // header + 12 members
}

TEST_CASE("baseline check-against compares classifications with a tree") {
    TempDir tmp;
    REQUIRE(run({"synthesize", "--sketch", model("gridworld.templ"), "--spec",
                 "P>=0.99 [ F \"goal\" ]", "--export-json", tmp.file("tree.json")})
                .exitCode == 0);
    SECTION("matching run agrees") {
        CliRun r = run({"baseline", "one-by-one", "--sketch", model("gridworld.templ"),
                        "--spec", "P>=0.99 [ F \"goal\" ]", "--out", tmp.file("m.csv"),
                        "--check-against", tmp.file("tree.json")});
        REQUIRE(r.exitCode == 0);
        REQUIRE(r.out.find("classifications match") != std::string::npos);
    }
    SECTION("different threshold mismatches") {
        CliRun r = run({"baseline", "one-by-one", "--sketch", model("gridworld.templ"),
                        "--spec", "P>=0.5 [ F \"goal\" ]", "--out", tmp.file("m.csv"),
                        "--check-against", tmp.file("tree.json")});
        REQUIRE(r.exitCode == 3);
        REQUIRE(r.err.find("mismatch") != std::string::npos);
    }
}

TEST_CASE("all-in-one respects the state cap with exit code 2") {
    CliRun r = run({"baseline", "all-in-one", "--sketch", model("gridworld.templ"), "--spec",
                    "P>=0.99 [ F \"goal\" ]", "--state-cap", "50"});
    REQUIRE(r.exitCode == 2);
    REQUIRE(r.err.find("resource limit") != std::string::npos);
}

TEST_CASE("synthesize exits with the resource code when capped") {
    CliRun r = run({"synthesize", "--sketch", model("gridworld.templ"), "--spec",
                    "P>=0.99 [ F \"goal\" ]", "--iteration-cap", "2"});
    REQUIRE(r.exitCode == 2);
    REQUIRE(r.out.find("unknown leaves") != std::string::npos);
}

TEST_CASE("deadlock self-loops are reported as warnings") {
    CliRun r = run({"synthesize", "--sketch", model("gridworld.templ"), "--spec",
                    "P>=0.5 [ F \"goal\" ]"});
    REQUIRE(r.exitCode == 0);
    REQUIRE(r.err.find("deadlocked state(s) received an implicit self-loop") !=
            std::string::npos);
}

TEST_CASE("synthesize writes a machine-readable report") {
    TempDir tmp;
    CliRun r = run({"synthesize", "--sketch", model("two_member.templ"), "--spec",
                    "P>=0.5 [ F \"goal\" ]", "--report", tmp.file("report.json"), "--seed",
                    "42"});
    REQUIRE(r.exitCode == 0);
    nlohmann::json doc = nlohmann::json::parse(slurp(tmp.file("report.json")));
    REQUIRE(doc.at("model").at("familySize") == 2);
    REQUIRE(doc.at("synthesis").at("leaves") == 1);
    REQUIRE(doc.at("seed") == 42);
    REQUIRE(doc.at("ratios").contains("leavesPerFamilyPercent"));
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
    REQUIRE(run({"synthesize", "--bogus"}).exitCode == 1);
    REQUIRE(run({}).exitCode == 1);
    REQUIRE(run({"baseline", "sideways", "--sketch", "x", "--spec", "y"}).exitCode == 1);
}
