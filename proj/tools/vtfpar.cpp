#include "vtf/cli.hpp"

int main(int argc, char** argv) { return vtf::run_cli(argc, argv); }
