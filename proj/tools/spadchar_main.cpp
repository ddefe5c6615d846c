#include <iostream>

#include "spadchar/cli.hpp"

int main(int argc, char** argv) { return spadchar::cli_dispatch(argc, argv, std::cout, std::cerr); }
