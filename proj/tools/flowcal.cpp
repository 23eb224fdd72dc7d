#include <iostream>

#include "flowcal/cli.hpp"

int main(int argc, char** argv) { return flowcal::run_cli(argc, argv, std::cout, std::cerr); }
