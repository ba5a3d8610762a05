// FLEXplore command-line entry point. Subcommands are bound in cli.hpp;
// this translation unit only owns main().
#include "cli.hpp"

int main(int argc, char** argv) { return flexplore::cli_main(argc, argv); }
