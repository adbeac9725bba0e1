#include <iostream>

#include "hsnn_cli.hpp"

int main(int argc, char** argv) { return hsnn::cli::run(argc, argv, std::cout, std::cerr); }
