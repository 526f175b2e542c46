#include "dubpipe/cli.hpp"

int main(int argc, char** argv) { return dubpipe::cli::run(argc, argv); }
