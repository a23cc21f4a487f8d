#include <iostream>
#include <string>
#include <vector>

#include "hbf/cli.hpp"

int main(int argc, char** argv) {
    return hbf::run_subcommand(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
