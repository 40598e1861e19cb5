#include <iostream>
#include <string>
#include <vector>

#include "famtree/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return famtree::run_cli(std::move(args), std::cout, std::cerr);
}
