#include "cli.hpp"

int main(int argc, char** argv) { return incepse::cli::run(argc, argv); }
