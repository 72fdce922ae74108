#include "tplab/harness.hpp"

int main(int argc, char** argv) { return tplab::run_cli(argc, argv); }
