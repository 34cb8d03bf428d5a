#include "cli.hpp"

int main(int argc, char** argv) { return redist::cli::run(argc, argv); }
