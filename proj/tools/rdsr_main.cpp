#include "rdsr/cli.hpp"

int main(int argc, char** argv) { return rdsr::cli::run_cli(argc, argv); }
