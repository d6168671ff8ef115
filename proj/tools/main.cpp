#include "cli.hpp"

int main(int argc, char** argv) { return dlest::cli::cli_main(argc, argv); }
