#include <iostream>

#include "caa/cli/cli.hpp"

int main(int argc, char** argv) { return caa::cli::cli_main(argc, argv, std::cout, std::cerr); }
