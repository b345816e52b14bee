#include "sgl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sgl::run_cli(args, std::cout, std::cerr);
}
