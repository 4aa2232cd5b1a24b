#include "dcaseg/cli.hpp"

int main(int argc, char** argv) { return dcaseg::cli_main(argc, argv); }
