#include "fscn/cli.hpp"

int main(int argc, char** argv) { return fscn::cli::run(argc, argv); }
