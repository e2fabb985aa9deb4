#include <iostream>

#include "hdet/cli.hpp"

int main(int argc, char** argv) { return hdet::cli::run(argc, argv, std::cout, std::cerr); }
