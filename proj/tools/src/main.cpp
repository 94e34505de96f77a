#include <iostream>

#include "geodisagg_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return geodisagg::cli::run(args, std::cout, std::cerr);
}
