#include <iostream>

#include "metagraphloc/cli.hpp"

int main(int argc, char** argv) { return mgl::cli::main(argc, argv, std::cout, std::cerr); }
