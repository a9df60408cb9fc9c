#include "ncam/cli.hpp"

int main(int argc, char** argv) { return ncam::cli::dispatch(argc, argv); }
