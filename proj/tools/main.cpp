#include "coevo/cli.hpp"

int main(int argc, char** argv) { return coevo::cli::run(argc, argv); }
