#include "dmdd/cli.hpp"

int main(int argc, char** argv) { return dmdd::cli_main(argc, argv); }
