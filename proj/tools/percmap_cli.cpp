#include <iostream>
#include <string>
#include <vector>

#include "percmap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return percmap::run_cli(args, std::cout, std::cerr);
}
