#include "cli.hpp"

int main(int argc, char** argv) { return coseg::cli::main(argc, argv); }
