#include <iostream>

#include "middelay/cli.hpp"

int main(int argc, char** argv) { return middelay::cli::run(argc, argv, std::cout, std::cerr); }
