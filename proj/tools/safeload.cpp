#include <iostream>
#include <string>
#include <vector>

#include "safeload/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return safeload::cli::run_cli(std::move(args), std::cout, std::cerr);
}
