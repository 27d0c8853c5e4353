#include "ecseg/cli.hpp"

int main(int argc, char** argv) { return ecseg::cli::run(argc, argv); }
