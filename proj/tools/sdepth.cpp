#include <iostream>

#include "sdepth/commands.hpp"

int main(int argc, char** argv) { return sdepth::run_cli(argc, argv, std::cout, std::cerr); }
