#include <iostream>

#include "flexdti/cli.hpp"

int main(int argc, char** argv) { return flexdti::cli::run(argc, argv, std::cout, std::cerr); }
