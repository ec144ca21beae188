#include <iostream>
#include <string>
#include <vector>

#include "aed/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return aed::run_cli(args, std::cout, std::cerr);
}
