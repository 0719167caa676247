#include <iostream>

#include "dagb/cli.hpp"

int main(int argc, char** argv) { return dagb::cli::run(argc, argv, std::cout, std::cerr); }
