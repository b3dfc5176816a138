#include "dbb/cli.hpp"

int main(int argc, char** argv) {
  return dbb::run_cli(argc, argv);
}
