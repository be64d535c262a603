#include "cli.hpp"

int main(int argc, char** argv) { return hogwild::cli::run(argc, argv); }
