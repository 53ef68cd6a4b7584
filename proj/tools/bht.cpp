#include "bht/cli.hpp"

int main(int argc, char** argv) { return bht::cli_main(argc, argv); }
