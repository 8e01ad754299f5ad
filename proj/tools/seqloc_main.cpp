#include "seqloc/cli.hpp"

int main(int argc, char** argv) { return seqloc::cli::run(argc, argv); }
