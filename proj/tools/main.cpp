#include "gsa/cli.hpp"

int main(int argc, char** argv) { return gsa::cli_main(argc, argv); }
