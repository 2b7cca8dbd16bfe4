#include <iostream>
#include <string>
#include <vector>

#include "fedsel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return fedsel::run_cli(args, std::cout, std::cerr);
}
