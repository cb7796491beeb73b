#include "segreg/cli.hpp"

#include <iostream>

int main(int argc, char **argv) { return segreg::cli::run(argc, argv, std::cout, std::cerr); }
