#include <iostream>
#include <string>
#include <vector>

#include "uaul/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return uaul::cli::dispatch(args, std::cout, std::cerr);
}
