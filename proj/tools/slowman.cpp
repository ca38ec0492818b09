#include "slowman/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return slowman::cli::run(argc, argv, std::cout, std::cerr); }
