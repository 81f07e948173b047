#include <iostream>

#include "maeast/cli.hpp"

int main(int argc, char** argv) { return maeast::run_cli(argc, argv, std::cout, std::cerr); }
