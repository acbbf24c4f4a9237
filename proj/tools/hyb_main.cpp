#include "cli.hpp"

int main(int argc, char** argv) { return hyb_cli_main(argc, argv); }
