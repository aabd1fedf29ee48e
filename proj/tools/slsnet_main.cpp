#include <iostream>

#include "slsnet/cli.hpp"

int main(int argc, char** argv) {
  return slsnet::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
