#include "twinopt/cli.hpp"

int main(int argc, char** argv) { return twinopt::run_cli(argc, argv); }
