#include <iostream>

#include "jigsawhsi/pipeline.hpp"

int main(int argc, char** argv) { return jigsawhsi::run_cli(argc, argv, std::cout, std::cerr); }
