#include <iostream>

#include "dtc/cli.hpp"

int main(int argc, char** argv) { return dtc::cli::dispatch(argc, argv, std::cout, std::cerr); }
