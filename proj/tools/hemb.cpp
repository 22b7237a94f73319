#include <iostream>
#include <string>
#include <vector>

#include "hemb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return hemb::cli::run(args, std::cout, std::cerr);
}
