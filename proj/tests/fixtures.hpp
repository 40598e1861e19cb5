#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "famtree/build.hpp"
#include "famtree/sketch.hpp"

namespace fixtures {

inline std::string models_dir() { return FAMTREE_MODELS_DIR; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string load_model(const std::string& name) {
    return read_file(models_dir() + "/" + name);
}

struct LoadedFamily {
    famtree::SketchProgram program;
    famtree::QuotientMdp quotient;
    famtree::Specification spec;
};

/// Parses a sketch, builds its quotient, and applies the specification's
/// target set.
inline LoadedFamily load_family(const std::string& modelName, const std::string& specText,
                                const famtree::BuildOptions& opts = {}) {
    LoadedFamily f;
    f.program = famtree::parse_sketch(load_model(modelName));
    f.spec = famtree::parse_specification(specText, f.program);
    f.quotient = famtree::build_quotient(f.program, opts);
    f.quotient.targets =
        famtree::eval_state_predicate(f.program, f.quotient.stateValuations, f.spec.target);
    return f;
}

inline LoadedFamily load_two_member(const std::string& specText = "P>=0.5 [ F \"goal\" ]") {
    return load_family("two_member.templ", specText);
}

inline LoadedFamily load_detour(const std::string& specText = "P>=1 [ F \"goal\" ]") {
    return load_family("detour.templ", specText);
}

inline LoadedFamily load_gridworld(const std::string& specText = "P>=0.99 [ F \"goal\" ]") {
    return load_family("gridworld.templ", specText);
}

} // namespace fixtures
