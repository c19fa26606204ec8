#include <iostream>

#include "kfbf/cli/app.hpp"

int main(int argc, char** argv) { return kfbf::cli::run(argc, argv, std::cout, std::cerr); }
