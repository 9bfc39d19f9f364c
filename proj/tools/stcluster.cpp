#include "stcluster/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stcluster::run_cli(argc, argv, std::cout, std::cerr); }
