#include <iostream>

#include "debris/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return debris::run_cli(args, std::cout, std::cerr);
}
