#include "linkedmf/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return linkedmf::cli::run(argc, argv, std::cout, std::cerr); }
