#include "dag/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dag::cli::main(argc, argv, std::cout, std::cerr); }
