#include <iostream>

#include "rodenet/cli/commands.hpp"

int main(int argc, char** argv) { return rodenet::cli::run(argc, argv, std::cout, std::cerr); }
