#include "ergolab_cli.hpp"

int main(int argc, char** argv) { return ergolab::cli::run_cli(argc, argv); }
