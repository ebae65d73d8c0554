#include <iostream>
#include <string>
#include <vector>

#include "cbfmeta/harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cbfmeta::run(args, std::cout, std::cerr);
}
