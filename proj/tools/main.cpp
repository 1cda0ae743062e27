#include <iostream>

#include "lrnet/cli.hpp"

int main(int argc, char** argv) { return lrnet::run_cli(argc, argv, std::cout, std::cerr); }
