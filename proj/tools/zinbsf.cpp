#include <string>
#include <vector>

#include "zinbsf/io/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return zinbsf::cli::run(args);
}
