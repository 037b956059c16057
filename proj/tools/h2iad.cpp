#include "h2iad/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return h2iad::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
