#include <iostream>

#include "nlpflow/cli.hpp"

int main(int argc, char** argv) { return nlpflow::cli::run(argc, argv, std::cout, std::cerr); }
