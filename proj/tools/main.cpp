#include "ernet/cli.hpp"

int main(int argc, char** argv) { return ernet::cli::run(argc, argv); }
