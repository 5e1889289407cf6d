#include <iostream>

#include "slab/cli/cli.hpp"

int main(int argc, char** argv) {
  return slab::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
