#include <iostream>

#include "laptool/cli.hpp"

int main(int argc, char** argv) { return laptool::run_cli(argc, argv, std::cout, std::cerr); }
