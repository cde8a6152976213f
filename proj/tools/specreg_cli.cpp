#include "specreg/cli.hpp"

int main(int argc, char** argv) { return specreg::run_cli(argc, argv); }
