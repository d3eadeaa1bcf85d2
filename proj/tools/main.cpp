#include "qamo/cli.hpp"

int main(int argc, char** argv) { return qamo::cli::run(argc, argv); }
