#include "psdmap/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return psdmap::run_cli(argc, argv, std::cout, std::cerr); }
