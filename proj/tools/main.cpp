#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return swarmloc::cli::dispatch(argc, argv, std::cout, std::cerr); }
