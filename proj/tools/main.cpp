#include "cdt/cli.hpp"

int main(int argc, char** argv) { return cdt::cli::dispatch(argc, argv); }
