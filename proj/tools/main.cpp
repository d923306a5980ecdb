#include "cli.hpp"

int main(int argc, char** argv) { return ronin::cli::run_cli(argc, argv); }
