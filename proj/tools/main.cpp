#include <iostream>

#include "helmetcv/cli.hpp"

int main(int argc, char** argv) { return helmetcv::cli::run(argc, argv, std::cout, std::cerr); }
