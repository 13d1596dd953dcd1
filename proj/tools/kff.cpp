#include <iostream>

#include "kff/cli.hpp"

int main(int argc, char** argv) { return kff::run_cli(argc, argv, std::cout, std::cerr); }
