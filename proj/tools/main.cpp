#include <iostream>

#include "echoseg/cli.h"

int main(int argc, char** argv) { return echoseg::run_cli(argc, argv, std::cout, std::cerr); }
