#include <iostream>

#include "mmadapt_cli/cli.hpp"

int main(int argc, char** argv) {
  return mmadapt::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
