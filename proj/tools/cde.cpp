#include <iostream>
#include <string>
#include <vector>

#include "cde/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cde::run(args, std::cout, std::cerr);
}
