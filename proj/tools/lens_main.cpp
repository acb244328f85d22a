#include <iostream>

#include "lens/cli.hpp"

int main(int argc, char** argv) {
  return lens::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
