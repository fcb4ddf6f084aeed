#include "cavmag/cli.hpp"

int main(int argc, char** argv) { return cavmag::run_cli(argc, argv); }
