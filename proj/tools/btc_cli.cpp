#include <string>
#include <vector>

#include "btc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return btc::cli::run(args);
}
