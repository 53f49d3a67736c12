#include <iostream>

#include "slip/cli.hpp"

int main(int argc, char** argv) { return slip::cli::run(argc, argv, std::cout, std::cerr); }
