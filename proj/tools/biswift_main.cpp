#include <iostream>

#include "biswift/cli.hpp"

int main(int argc, char** argv) {
  return biswift::cli::run_main(argc, argv, std::cout, std::cerr);
}
