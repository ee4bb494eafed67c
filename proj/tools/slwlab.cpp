#include "slw/cli.hpp"

int main(int argc, char** argv) { return slw::run_cli(argc, argv); }
