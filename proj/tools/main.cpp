#include "vmf/cli.hpp"

int main(int argc, char** argv) { return vmf::run_cli(argc, argv); }
