#include "plt/cli.hpp"

int main(int argc, char** argv) { return plt::cli::run_cli(argc, argv); }
