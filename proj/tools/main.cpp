#include "wpb/cli.hpp"

int main(int argc, char** argv) { return wpb::cli_main(argc, argv); }
