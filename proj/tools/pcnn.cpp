#include <string>
#include <vector>

#include "pcnn/cli.hpp"

int main(int argc, char** argv) {
  return pcnn::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
