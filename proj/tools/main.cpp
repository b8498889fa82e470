#include <iostream>

#include <rstab/cli.hpp>

int main(int argc, char** argv) {
  return rstab::run_cli(argc, argv, std::cout, std::cerr);
}
