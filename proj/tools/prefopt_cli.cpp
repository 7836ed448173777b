#include <string>
#include <vector>

#include "prefopt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return prefopt::run_cli(args);
}
