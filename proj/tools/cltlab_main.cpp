#include "cltlab/runner.hpp"

int main(int argc, char** argv) { return cltlab::cli::run_main(argc, argv); }
