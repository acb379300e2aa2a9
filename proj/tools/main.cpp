#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dqrp::cli::run(argc, argv, std::cout, std::cerr); }
