#include <iostream>

#include "transinv/cli.hpp"

int main(int argc, char** argv) {
  return transinv::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
