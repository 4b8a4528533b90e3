#include "sigmetric/cli.hpp"

int main(int argc, char** argv) {
  return sigmetric::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
