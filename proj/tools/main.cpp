#include <iostream>

#include "otzsl/cli.hpp"

int main(int argc, char** argv) { return otzsl::cli::run_cli(argc, argv, std::cout, std::cerr); }
