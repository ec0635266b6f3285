#include <iostream>
#include <string>
#include <vector>

#include "cxrnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cxr::run_cli(args, std::cout, std::cerr);
}
